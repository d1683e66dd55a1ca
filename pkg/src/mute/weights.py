"""Class-similarity weights derived from confusion counts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codes import WeightMatrix, format_matrix_csv, parse_matrix_csv
from .errors import CodebookParseError, DegenerateWeightsError

DEFAULT_FLOOR = 0.05


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[i, j]`` = samples of true class i decoded as class j."""

    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.counts, copy=True)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise ValueError(f"confusion matrix must be square, got shape {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.array_equal(c, np.round(c)):
                raise ValueError("confusion counts must be integers")
        c = c.astype(np.int64)
        if (c < 0).any():
            raise ValueError("confusion counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def __repr__(self):
        return f"ConfusionMatrix(n={self.n}, total={self.total})"


def confusion_to_weights(cm: ConfusionMatrix, floor: float = DEFAULT_FLOOR) -> WeightMatrix:
    """Symmetrized, row-normalized confusion plus ``floor``, scaled so the max is 1.

    For i != j the raw similarity is
    ``(counts[i, j] + counts[j, i]) / (rows[i] + rows[j])``.
    """
    if floor < 0:
        raise ValueError(f"floor must be >= 0, got {floor}")
    c = cm.counts.astype(float)
    n = cm.n
    if n < 2:
        raise ValueError("need at least two classes")
    rows = c.sum(axis=1)
    denom = rows[:, None] + rows[None, :]
    sym = c + c.T
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, sym / np.where(denom > 0, denom, 1.0), 0.0)
    w = s + floor
    np.fill_diagonal(w, 0.0)
    top = w.max()
    if top <= 0:
        raise DegenerateWeightsError("no off-diagonal confusion and floor is 0; weights would be all zero")
    w = w / top
    # exact symmetry after division
    w = np.triu(w, 1)
    return WeightMatrix(w + w.T)


def uniform_weights(n: int) -> WeightMatrix:
    if n < 2:
        raise ValueError(f"uniform weights need n >= 2, got {n}")
    return WeightMatrix(np.ones((n, n)) - np.eye(n))


def estimate_confusion(model, data) -> ConfusionMatrix:
    """Confusion of a model trained against a one-hot codebook."""
    from .baselines import one_hot
    from .nn import evaluate

    if model.n_outputs != data.n_classes:
        raise ValueError(f"model has {model.n_outputs} outputs, data has {data.n_classes} classes")
    return evaluate(model, data, one_hot(data.n_classes)).confusion


def save_confusion(cm: ConfusionMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_matrix_csv(cm.counts, integer=True))


def load_confusion(path) -> ConfusionMatrix:
    with open(path) as fh:
        counts = parse_matrix_csv(fh.read(), integer=True)
    try:
        return ConfusionMatrix(counts)
    except ValueError as exc:
        raise CodebookParseError(f"{path}: {exc}") from exc
