"""Codewords, codebooks, class-similarity weights and the objective on them.

A codebook is stored as an ``(N, B)`` uint8 matrix whose row ``i`` is the
target code for class ``i``. Bit strings ("0110...") are the external
representation; row ``i`` of the matrix reads left to right as the string.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import CodebookParseError

MIXED = "mixed"


class Provenance(str, enum.Enum):
    ONE_HOT = "one_hot"
    HADAMARD = "hadamard"
    RANDOM = "random"
    OPTIMIZED_UNWEIGHTED = "optimized_unweighted"
    OPTIMIZED_WEIGHTED = "optimized_weighted"


def _as_bits(word) -> np.ndarray:
    if isinstance(word, str):
        if any(ch not in "01" for ch in word):
            raise ValueError(f"bit string may only contain 0/1, got {word!r}")
        return np.frombuffer(word.encode("ascii"), dtype=np.uint8) - ord("0")
    arr = np.asarray(word)
    if arr.ndim != 1:
        raise ValueError("a codeword must be one-dimensional")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("a codeword may only contain 0/1 values")
    return arr.astype(np.uint8)


def bits_to_str(bits: Iterable[int]) -> str:
    return "".join("1" if b else "0" for b in bits)


@dataclass(frozen=True, eq=False)
class Codebook:
    """Class-indexed set of binary target codes.

    Construction only checks the shape; use :func:`validate_codebook` to
    check distinctness and popcount.
    """

    codes: np.ndarray
    k_hot: Union[int, str]
    provenance: Provenance
    seed: int | None = None

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.uint8, copy=True)
        if codes.ndim != 2 or codes.shape[0] < 1 or codes.shape[1] < 1:
            raise ValueError("codes must be a non-empty (N, B) matrix")
        if not np.isin(codes, (0, 1)).all():
            raise ValueError("codes may only contain 0/1 values")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        if self.k_hot != MIXED and not (isinstance(self.k_hot, (int, np.integer)) and self.k_hot >= 1):
            raise ValueError(f"k_hot must be a positive int or {MIXED!r}, got {self.k_hot!r}")
        if self.k_hot != MIXED:
            object.__setattr__(self, "k_hot", int(self.k_hot))

    @classmethod
    def from_strings(cls, words: Sequence[str], k_hot, provenance, seed=None) -> "Codebook":
        lengths = {len(w) for w in words}
        if len(lengths) != 1:
            raise ValueError("all codewords must have the same length")
        return cls(np.stack([_as_bits(w) for w in words]), k_hot, provenance, seed)

    @property
    def n_classes(self) -> int:
        return self.codes.shape[0]

    @property
    def n_bits(self) -> int:
        return self.codes.shape[1]

    def strings(self) -> list[str]:
        return [bits_to_str(row) for row in self.codes]

    def concatenated(self) -> str:
        return "".join(self.strings())

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return (
            self.k_hot == other.k_hot
            and self.provenance == other.provenance
            and self.seed == other.seed
            and np.array_equal(self.codes, other.codes)
        )

    def __hash__(self):
        return hash((self.concatenated(), self.n_bits, self.k_hot, self.provenance, self.seed))

    def __repr__(self):
        return (
            f"Codebook(n_classes={self.n_classes}, n_bits={self.n_bits}, k_hot={self.k_hot!r}, "
            f"provenance={self.provenance.value!r}, seed={self.seed!r}, codes={self.strings()!r})"
        )


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Symmetric, non-negative, zero-diagonal class-similarity weights."""

    w: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.w, dtype=float, copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise ValueError(f"weight matrix must be square, got shape {w.shape}")
        if not np.isfinite(w).all():
            raise ValueError("weight matrix has non-finite entries")
        if (w < 0).any():
            raise ValueError("weight matrix has negative entries")
        if np.any(np.diag(w) != 0):
            raise ValueError("weight matrix diagonal must be zero")
        if not np.array_equal(w, w.T):
            raise ValueError("weight matrix must be symmetric")
        if w.shape[0] > 1 and not (w > 0).any():
            raise ValueError("weight matrix needs at least one positive off-diagonal entry")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def scaled(self, c: float) -> "WeightMatrix":
        return WeightMatrix(self.w * c)

    def permuted(self, perm: Sequence[int]) -> "WeightMatrix":
        perm = np.asarray(perm)
        return WeightMatrix(self.w[np.ix_(perm, perm)])

    def __eq__(self, other):
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return np.array_equal(self.w, other.w)

    def __repr__(self):
        return f"WeightMatrix(n={self.n})"


def hamming_distance(a, b) -> int:
    """Number of positions where two codewords differ."""
    a, b = _as_bits(a), _as_bits(b)
    if a.shape != b.shape:
        raise ValueError(f"codeword length mismatch: {a.size} vs {b.size}")
    return int(np.count_nonzero(a != b))


def pairwise_distances(cb: Codebook) -> np.ndarray:
    """(N, N) integer matrix of Hamming distances between all codes."""
    c = cb.codes.astype(np.int32)
    # d(a, b) = |a| + |b| - 2<a, b> for 0/1 vectors
    pop = c.sum(axis=1)
    return pop[:, None] + pop[None, :] - 2 * (c @ c.T)


def _weight_array(w, n: int) -> np.ndarray:
    arr = w.w if isinstance(w, WeightMatrix) else np.asarray(w, dtype=float)
    if arr.shape != (n, n):
        raise ValueError(f"weight matrix is {arr.shape}, codebook has {n} classes")
    return arr


def weighted_objective(cb: Codebook, w) -> float:
    """Sum over class pairs i < j of ``w[i, j] * d(c_i, c_j)``."""
    arr = _weight_array(w, cb.n_classes)
    iu = np.triu_indices(cb.n_classes, k=1)
    return float(np.dot(arr[iu], pairwise_distances(cb)[iu]))


def min_pairwise_distance(cb: Codebook) -> int:
    if cb.n_classes < 2:
        raise ValueError("min pairwise distance needs at least two codewords")
    d = pairwise_distances(cb)
    return int(d[np.triu_indices(cb.n_classes, k=1)].min())


@dataclass(frozen=True)
class Violation:
    kind: str  # "length" | "popcount" | "duplicate"
    classes: tuple[int, ...]
    message: str


def validate_codebook(cb: Codebook, expected_bits: int | None = None) -> list[Violation]:
    """Every invariant the codebook breaks; an empty list means valid."""
    report = []
    if expected_bits is not None and cb.n_bits != expected_bits:
        report.append(Violation("length", tuple(range(cb.n_classes)),
                                f"codewords have length {cb.n_bits}, expected {expected_bits}"))
    if cb.k_hot != MIXED:
        pops = cb.codes.sum(axis=1)
        for i in np.flatnonzero(pops != cb.k_hot):
            report.append(Violation("popcount", (int(i),),
                                    f"class {i} has {int(pops[i])} hot bits, expected {cb.k_hot}"))
    seen: dict[bytes, int] = {}
    for i, row in enumerate(cb.codes):
        key = row.tobytes()
        if key in seen:
            j = seen[key]
            report.append(Violation("duplicate", (j, i), f"classes {j} and {i} share codeword {bits_to_str(row)}"))
        else:
            seen[key] = i
    return report


def is_valid(cb: Codebook) -> bool:
    return not validate_codebook(cb)


# -- serialization ---------------------------------------------------------


def codebook_to_dict(cb: Codebook) -> dict:
    return {
        "n_classes": cb.n_classes,
        "n_bits": cb.n_bits,
        "k_hot": cb.k_hot,
        "provenance": cb.provenance.value,
        "seed": cb.seed,
        "codes": cb.strings(),
    }


def serialize_codebook(cb: Codebook) -> bytes:
    problems = validate_codebook(cb)
    if problems:
        raise ValueError(f"refusing to serialize invalid codebook: {problems[0].message}")
    return (json.dumps(codebook_to_dict(cb), indent=2) + "\n").encode("utf-8")


def _require(doc: dict, key: str, kinds):
    if key not in doc:
        raise CodebookParseError(f"missing field {key!r}")
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise CodebookParseError(f"field {key!r} has invalid type {type(value).__name__}")
    return value


def parse_codebook(data: Union[bytes, str]) -> Codebook:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CodebookParseError(f"not a JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise CodebookParseError("top-level value must be an object")

    n_classes = _require(doc, "n_classes", int)
    n_bits = _require(doc, "n_bits", int)
    k_hot = _require(doc, "k_hot", (int, str))
    provenance = _require(doc, "provenance", str)
    seed = doc.get("seed", None)
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise CodebookParseError("field 'seed' must be an integer or null")
    codes = _require(doc, "codes", list)

    if n_classes < 1:
        raise CodebookParseError("field 'n_classes' must be positive")
    if n_bits < 1:
        raise CodebookParseError("field 'n_bits' must be positive")
    if isinstance(k_hot, str) and k_hot != MIXED:
        raise CodebookParseError(f"field 'k_hot' must be an integer or {MIXED!r}")
    if isinstance(k_hot, int) and k_hot < 1:
        raise CodebookParseError("field 'k_hot' must be positive")
    try:
        provenance = Provenance(provenance)
    except ValueError:
        raise CodebookParseError(f"field 'provenance' has unknown value {provenance!r}") from None
    if len(codes) != n_classes:
        raise CodebookParseError(f"field 'codes' has {len(codes)} entries, n_classes is {n_classes}")
    for i, word in enumerate(codes):
        if not isinstance(word, str) or not word or set(word) - {"0", "1"}:
            raise CodebookParseError(f"codes[{i}] is not a bit string")
        if len(word) != n_bits:
            raise CodebookParseError(f"codes[{i}] has length {len(word)}, n_bits is {n_bits}")

    cb = Codebook.from_strings(codes, k_hot, provenance, seed)
    problems = validate_codebook(cb)
    if problems:
        v = problems[0]
        raise CodebookParseError(f"codes{list(v.classes)}: {v.message}")
    return cb


def save_codebook(cb: Codebook, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_codebook(cb))


def load_codebook(path) -> Codebook:
    with open(path, "rb") as fh:
        return parse_codebook(fh.read())


# -- weight matrix CSV -----------------------------------------------------


def format_matrix_csv(rows: np.ndarray, integer: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([str(int(v)) if integer else repr(float(v)) for v in row])
    return buf.getvalue()


def parse_matrix_csv(text: str, integer: bool = False) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise CodebookParseError("matrix CSV is empty")
    n = len(rows)
    out = []
    for i, r in enumerate(rows):
        if len(r) != n:
            raise CodebookParseError(f"row {i} has {len(r)} columns, expected {n}")
        try:
            out.append([int(c) if integer else float(c) for c in r])
        except ValueError as exc:
            raise CodebookParseError(f"row {i}: {exc}") from exc
    return np.array(out, dtype=np.int64 if integer else float)


def save_weights(w: WeightMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_matrix_csv(w.w))


def load_weights(path) -> WeightMatrix:
    with open(path) as fh:
        arr = parse_matrix_csv(fh.read())
    try:
        return WeightMatrix(arr)
    except ValueError as exc:
        raise CodebookParseError(f"{path}: {exc}") from exc
