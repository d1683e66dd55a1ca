"""Search for K-hot codebooks that maximize similarity-weighted Hamming distance.

Three searchers share one objective, ``sum_{i<j} w_ij * d(c_i, c_j)``:

* :func:`exact_search` enumerates every ordered selection of distinct K-hot
  words (small instances only) and is used as the oracle.
* :func:`local_search` is multi-start simulated annealing over a three-move
  neighbourhood, followed by a deterministic hill-climbing polish.
* :func:`weighted_shuffle` keeps the set of words and only permutes which
  class gets which word.

Inside the searchers a codeword is a Python ``int``; string position ``p``
(0 = leftmost) is integer bit ``B - 1 - p``, so integer order is the same as
lexicographic order on bit strings.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field
from itertools import combinations, islice, permutations
from typing import Optional, Sequence, Union

import numpy as np

from .codes import (
    Codebook,
    Provenance,
    WeightMatrix,
    min_pairwise_distance,
    pairwise_distances,
    weighted_objective,
)
from .errors import InfeasibleConfigError, InstanceTooLargeError

DEFAULT_EXACT_CAP = 10**8
UNIFORM = "uniform"
AUTO = "auto"
AUTO_FLOOR = 4
# enumerate all K-hot words when there are at most this many
_POOL_CAP = 5000
_COOLING = 0.995
_SHUFFLE_EXHAUSTIVE_MAX = 8


@dataclass(frozen=True)
class OptimizerConfig:
    n_classes: int
    k_hot: int
    n_bits: Optional[int] = None
    weights: Union[WeightMatrix, str] = UNIFORM
    seed: int = 0
    restarts: int = 32
    max_iters_per_restart: int = 10_000
    time_budget: Optional[float] = None
    min_distance_floor: Union[int, str, None] = AUTO
    exact_cap: int = DEFAULT_EXACT_CAP

    def __post_init__(self):
        if self.n_bits is None:
            object.__setattr__(self, "n_bits", self.n_classes)
        n, b, k = self.n_classes, self.n_bits, self.k_hot
        if n < 1:
            raise InfeasibleConfigError(f"n_classes must be positive, got {n}")
        if not 1 <= k < b:
            raise InfeasibleConfigError(f"need 1 <= k < n_bits, got k={k}, n_bits={b}")
        if n > math.comb(b, k):
            raise InfeasibleConfigError(f"{n} classes but only C({b},{k}) = {math.comb(b, k)} distinct {k}-hot words")
        if isinstance(self.weights, str):
            if self.weights != UNIFORM:
                raise ValueError(f"weights must be a WeightMatrix or {UNIFORM!r}")
        elif self.weights.n != n:
            raise ValueError(f"weight matrix is {self.weights.n}x{self.weights.n}, n_classes is {n}")
        if self.restarts < 1 or self.max_iters_per_restart < 1:
            raise ValueError("restarts and max_iters_per_restart must be positive")
        floor = self.min_distance_floor
        if floor == AUTO:
            floor = auto_floor(n, b, k)
        elif floor is not None and (isinstance(floor, str) or floor < 0):
            raise ValueError(f"min_distance_floor must be a non-negative int, None or {AUTO!r}")
        object.__setattr__(self, "min_distance_floor", floor or None)

    @property
    def uniform(self) -> bool:
        return isinstance(self.weights, str)

    def weight_array(self) -> np.ndarray:
        if self.uniform:
            return np.ones((self.n_classes, self.n_classes)) - np.eye(self.n_classes)
        return self.weights.w

    def provenance(self) -> Provenance:
        return Provenance.OPTIMIZED_UNWEIGHTED if self.uniform else Provenance.OPTIMIZED_WEIGHTED


@dataclass(frozen=True)
class OptimizerResult:
    codebook: Codebook
    objective: float
    min_distance: Optional[int]
    iterations: int
    wall_time: float
    restarts_used: int
    truncated: bool = False
    restart_objectives: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "min_distance": self.min_distance,
            "iterations": self.iterations,
            "wall_time_s": self.wall_time,
            "restarts_used": self.restarts_used,
            "truncated": self.truncated,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# -- word helpers ----------------------------------------------------------


def _row_to_int(row) -> int:
    v = 0
    for bit in row:
        v = (v << 1) | int(bit)
    return v


def _int_to_row(x: int, b: int) -> list[int]:
    return [(x >> (b - 1 - p)) & 1 for p in range(b)]


def k_hot_words(b: int, k: int) -> list[int]:
    """All K-hot words of length B, in lexicographic order of their bit strings."""
    return sorted(sum(1 << p for p in hot) for hot in combinations(range(b), k))


def lexicode(b: int, k: int, d: int, n: int, max_scan: int = 200_000) -> Optional[list[int]]:
    """Greedy constant-weight code: scan K-hot words in a fixed order, keep those at
    distance >= d from all kept so far. Returns the first n kept, or None."""
    kept: list[int] = []
    for scanned, hot in enumerate(combinations(range(b), k)):
        if scanned >= max_scan:
            return None
        x = sum(1 << (b - 1 - p) for p in hot)
        if all((x ^ c).bit_count() >= d for c in kept):
            kept.append(x)
            if len(kept) == n:
                return kept
    return None


def auto_floor(n: int, b: int, k: int) -> Optional[int]:
    """Distance floor 4 whenever a witness codebook proves it attainable, else no floor."""
    if n < 2 or k < 2 or b - k < 2:
        return None
    return AUTO_FLOOR if lexicode(b, k, AUTO_FLOOR, n) is not None else None


def _codebook_from_ints(words: Sequence[int], cfg: OptimizerConfig) -> Codebook:
    codes = np.array([_int_to_row(x, cfg.n_bits) for x in words], dtype=np.uint8)
    return Codebook(codes, cfg.k_hot, cfg.provenance(), cfg.seed)


def _result(words, cfg, iterations, t0, restarts_used, truncated=False, restart_objectives=()):
    cb = _codebook_from_ints(words, cfg)
    return OptimizerResult(
        codebook=cb,
        objective=weighted_objective(cb, cfg.weight_array()),
        min_distance=min_pairwise_distance(cb) if cb.n_classes > 1 else None,
        iterations=iterations,
        wall_time=time.perf_counter() - t0,
        restarts_used=restarts_used,
        truncated=truncated,
        restart_objectives=tuple(restart_objectives),
    )


def _tolerance(w: np.ndarray, b: int) -> float:
    return 1e-9 * max(1.0, float(np.abs(w).sum()) * b)


# -- exact oracle ----------------------------------------------------------


def search_space_size(cfg: OptimizerConfig) -> int:
    return math.perm(math.comb(cfg.n_bits, cfg.k_hot), cfg.n_classes)


def exact_search(cfg: OptimizerConfig) -> OptimizerResult:
    """Global optimum by enumerating every ordered selection of distinct words.

    Among optimal codebooks (objective within a relative 1e-9 of the best) the
    lexicographically smallest concatenated bit string is returned.
    """
    t0 = time.perf_counter()
    size = search_space_size(cfg)
    if size > cfg.exact_cap:
        raise InstanceTooLargeError(size, cfg.exact_cap)
    n = cfg.n_classes
    words = k_hot_words(cfg.n_bits, cfg.k_hot)
    if n == 1:
        return _result(words[:1], cfg, 1, t0, 1)

    bits = np.array([_int_to_row(x, cfg.n_bits) for x in words], dtype=np.int16)
    pop = bits.sum(axis=1)
    dist = (pop[:, None] + pop[None, :] - 2 * (bits @ bits.T)).astype(np.int16)
    w = cfg.weight_array()
    I, J = np.triu_indices(n, k=1)
    wvec = w[I, J]
    perms = np.array(list(permutations(range(n))), dtype=np.int64)
    floor = cfg.min_distance_floor or 0
    chunk = max(1, 2_000_000 // (len(perms) * len(I)))

    def chunks():
        it = combinations(range(len(words)), n)
        while True:
            block = list(islice(it, chunk))
            if not block:
                return
            subsets = np.array(block, dtype=np.int64)
            sel = subsets[:, perms]  # (S, P, N): class i gets word sel[..., i]
            d = dist[sel[..., I], sel[..., J]]  # (S, P, pairs)
            obj = d @ wvec
            if floor:
                obj = np.where(d.min(axis=-1) >= floor, obj, -np.inf)
            yield sel, obj

    best = -np.inf
    for _, obj in chunks():
        best = max(best, float(obj.max()))
    if best == -np.inf:
        raise InfeasibleConfigError(f"no codebook reaches min distance {floor}")

    threshold = best - _tolerance(w, cfg.n_bits)
    winner = None
    for sel, obj in chunks():
        hits = sel[obj >= threshold]
        if len(hits):
            first = hits[np.lexsort(hits.T[::-1])[0]]
            if winner is None or tuple(first) < tuple(winner):
                winner = first
    return _result([words[i] for i in winner], cfg, size, t0, 1)


# -- local search ----------------------------------------------------------


class _Problem:
    """Flattened, int-based view of a config used by the annealer."""

    def __init__(self, cfg: OptimizerConfig):
        self.n, self.b, self.k = cfg.n_classes, cfg.n_bits, cfg.k_hot
        self.w_np = cfg.weight_array()
        self.w = self.w_np.tolist()
        self.uniform = cfg.uniform
        self.floor = cfg.min_distance_floor or 0
        self.n_words = math.comb(self.b, self.k)
        self.pool = k_hot_words(self.b, self.k) if self.n_words <= _POOL_CAP else None
        self.eps = _tolerance(self.w_np, self.b)

    def random_word(self, rng: random.Random) -> int:
        return sum(1 << p for p in rng.sample(range(self.b), self.k))

    def objective(self, words) -> float:
        total = 0.0
        for i in range(self.n):
            wi, ci = self.w[i], words[i]
            for j in range(i + 1, self.n):
                total += wi[j] * (ci ^ words[j]).bit_count()
        return total

    def replace_delta(self, words, i, new):
        """Objective change and new min distance to the others if class i takes ``new``."""
        old = words[i]
        wi = self.w[i]
        delta = 0.0
        mind = self.b + 1
        for j in range(self.n):
            if j == i:
                continue
            cj = words[j]
            dn = (new ^ cj).bit_count()
            delta += wi[j] * (dn - (old ^ cj).bit_count())
            if dn < mind:
                mind = dn
        return delta, mind

    def swap_delta(self, words, a, c):
        wa, wc = self.w[a], self.w[c]
        xa, xc = words[a], words[c]
        delta = 0.0
        for j in range(self.n):
            if j == a or j == c:
                continue
            cj = words[j]
            delta += (wa[j] - wc[j]) * ((xc ^ cj).bit_count() - (xa ^ cj).bit_count())
        return delta

    def min_distance(self, words) -> int:
        return min(
            ((words[i] ^ words[j]).bit_count() for i in range(self.n) for j in range(i + 1, self.n)),
            default=self.b,
        )

    def valid(self, words) -> bool:
        return (
            len(set(words)) == self.n
            and all(x.bit_count() == self.k and x >> self.b == 0 for x in words)
            and (self.n < 2 or self.min_distance(words) >= self.floor)
        )


def _restart_rng(seed: int, restarts: int) -> list[random.Random]:
    children = np.random.SeedSequence(seed & (2**64 - 1)).spawn(restarts)
    return [random.Random(int(c.generate_state(1, dtype=np.uint64)[0])) for c in children]


def _initial_state(prob: _Problem, rng: random.Random) -> list[int]:
    for _ in range(200):
        chosen: list[int] = []
        used: set[int] = set()
        if prob.pool is not None:
            candidates = iter(rng.sample(prob.pool, len(prob.pool)))
        else:
            candidates = (prob.random_word(rng) for _ in range(200 * prob.n))
        for x in candidates:
            if x in used:
                continue
            if prob.floor and any((x ^ c).bit_count() < prob.floor for c in chosen):
                continue
            chosen.append(x)
            used.add(x)
            if len(chosen) == prob.n:
                return chosen
        if not prob.floor:
            break
    if prob.floor:
        witness = lexicode(prob.b, prob.k, prob.floor, prob.n)
        if witness is not None:
            return witness
    raise InfeasibleConfigError(
        f"could not build {prob.n} distinct {prob.k}-hot words of length {prob.b} "
        f"with min distance {prob.floor}"
    )


def greedy_baseline(cfg: OptimizerConfig) -> list[int]:
    """One-hot grown to K-hot: class i gets the cyclic run of K bits starting at i.

    Classes beyond B take the lexicographically smallest unused words.
    """
    b, k = cfg.n_bits, cfg.k_hot
    words: list[int] = []
    used: set[int] = set()
    for i in range(min(cfg.n_classes, b)):
        x = _row_to_int([1 if (p - i) % b < k else 0 for p in range(b)])
        words.append(x)
        used.add(x)
    if cfg.n_classes > b:
        for hot in combinations(range(b), k):
            x = _row_to_int([1 if p in hot else 0 for p in range(b)])
            if x not in used:
                words.append(x)
                used.add(x)
                if len(words) == cfg.n_classes:
                    break
    return words


def _anneal(prob: _Problem, rng: random.Random, max_iters: int, deadline=None, trace=None, check=False):
    """One restart: annealing then polish. Returns (words, iterations, truncated)."""
    n, b, k = prob.n, prob.b, prob.k
    words = _initial_state(prob, rng)
    if n == 1:
        return words, 0, False
    used = set(words)
    obj = prob.objective(words)
    best_obj, best_words = obj, list(words)
    temp = obj / (n * b)
    eps = prob.eps
    patience = b * n
    idle = 0
    can_replace = prob.n_words > n
    use_swap = not prob.uniform
    truncated = False
    it = 0

    while it < max_iters:
        it += 1
        if deadline is not None and it % 256 == 0 and time.perf_counter() > deadline:
            truncated = True
            break
        r = rng.random()
        if r < 0.45:
            kind = "bit"
        elif r < 0.9:
            kind = "replace" if can_replace else "bit"
        else:
            kind = "swap" if use_swap else ("replace" if can_replace else "bit")

        if kind == "bit":
            # move one hot bit to a cold position inside a word
            i = rng.randrange(n)
            x = words[i]
            while True:
                p = rng.randrange(b)
                if x >> p & 1:
                    break
            while True:
                q = rng.randrange(b)
                if not x >> q & 1:
                    break
            move = ("replace", i, x ^ (1 << p) ^ (1 << q))
        elif kind == "replace":
            i = rng.randrange(n)
            new = prob.pool[rng.randrange(prob.n_words)] if prob.pool is not None else prob.random_word(rng)
            move = ("replace", i, new)
        else:
            a, c = rng.sample(range(n), 2)
            move = ("swap", a, c)

        if move[0] == "replace":
            _, i, new = move
            if new in used:
                delta = None
            else:
                delta, mind = prob.replace_delta(words, i, new)
                if mind < prob.floor:
                    delta = None
        else:
            delta = prob.swap_delta(words, move[1], move[2])

        accepted = False
        if delta is not None:
            if delta >= -eps:
                accepted = True
            elif temp > 0 and rng.random() < math.exp(delta / temp):
                accepted = True
        if accepted:
            if move[0] == "replace":
                used.discard(words[i])
                used.add(new)
                words[i] = new
            else:
                a, c = move[1], move[2]
                words[a], words[c] = words[c], words[a]
            obj += delta
            if abs(delta) > eps:
                idle = 0
            else:
                idle += 1
            if obj > best_obj + eps:
                best_obj, best_words = obj, list(words)
        else:
            idle += 1
        if check:
            assert prob.valid(words), words
        if trace is not None:
            trace.append(best_obj)
        temp *= _COOLING
        if idle >= patience:
            break

    if not truncated:
        best_words = _polish(prob, best_words)
        if trace is not None:
            trace.append(prob.objective(best_words))
    return best_words, it, truncated


def _polish(prob: _Problem, words: list[int]) -> list[int]:
    """First-improvement hill climbing over the full neighbourhood."""
    words = list(words)
    used = set(words)
    n, b, eps = prob.n, prob.b, prob.eps
    improved = True
    while improved:
        improved = False
        for i in range(n):
            if prob.pool is not None:
                candidates = prob.pool
            else:
                x = words[i]
                ones = [p for p in range(b) if x >> p & 1]
                zeros = [q for q in range(b) if not x >> q & 1]
                candidates = [x ^ (1 << p) ^ (1 << q) for p in ones for q in zeros]
            for new in candidates:
                if new in used:
                    continue
                delta, mind = prob.replace_delta(words, i, new)
                if delta > eps and mind >= prob.floor:
                    used.discard(words[i])
                    used.add(new)
                    words[i] = new
                    improved = True
        if not prob.uniform:
            for a in range(n):
                for c in range(a + 1, n):
                    if prob.swap_delta(words, a, c) > eps:
                        words[a], words[c] = words[c], words[a]
                        improved = True
    return words


def local_search(cfg: OptimizerConfig) -> OptimizerResult:
    """Multi-start annealing; the best restart (or the greedy baseline) wins.

    Ties between restarts go to the larger minimum distance, then to the
    lexicographically smallest concatenated bit string, so the outcome does
    not depend on restart order.
    """
    t0 = time.perf_counter()
    prob = _Problem(cfg)
    deadline = t0 + cfg.time_budget if cfg.time_budget is not None else None
    rngs = _restart_rng(cfg.seed, cfg.restarts)

    candidates = []
    baseline = greedy_baseline(cfg)
    if prob.valid(baseline):
        candidates.append(baseline)
    total_iters = 0
    truncated = False
    used_restarts = 0
    restart_objs = []
    for rng in rngs:
        words, iters, cut = _anneal(prob, rng, cfg.max_iters_per_restart, deadline)
        total_iters += iters
        used_restarts += 1
        candidates.append(words)
        restart_objs.append(prob.objective(words))
        if cut:
            truncated = True
            break

    def key(ws):
        cb = _codebook_from_ints(ws, cfg)
        md = min_pairwise_distance(cb) if cfg.n_classes > 1 else 0
        return (weighted_objective(cb, prob.w_np), md, [-x for x in ws])

    best = max(candidates, key=key)
    if not cfg.uniform and cfg.n_classes > 1:
        shuffled = weighted_shuffle(_codebook_from_ints(best, cfg), cfg.weights, seed=cfg.seed)
        alt = [_row_to_int(row) for row in shuffled.codes]
        if key(alt) > key(best):
            best = alt
    return _result(best, cfg, total_iters, t0, used_restarts, truncated, restart_objs)


# -- weighted shuffle ------------------------------------------------------


def weighted_shuffle(cb: Codebook, w, seed: int = 0, restarts: int = 32) -> Codebook:
    """Reassign the existing codewords to classes to maximize the weighted objective.

    Exhaustive over all permutations for N <= 8, pairwise-swap hill climbing
    with restarts above that.
    """
    n = cb.n_classes
    warr = w.w if isinstance(w, WeightMatrix) else np.asarray(w, dtype=float)
    if warr.shape != (n, n):
        raise ValueError(f"weight matrix is {warr.shape}, codebook has {n} classes")
    if n == 1:
        return cb
    dist = pairwise_distances(cb)
    order = np.argsort(cb.strings(), kind="stable")
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    tol = _tolerance(warr, cb.n_bits)

    if n <= _SHUFFLE_EXHAUSTIVE_MAX:
        I, J = np.triu_indices(n, k=1)
        perms = np.array(list(permutations(range(n))), dtype=np.int64)
        vals = dist[perms[:, I], perms[:, J]] @ warr[I, J]
        hits = rank[perms[vals >= vals.max() - tol]]
        best_rank = hits[np.lexsort(hits.T[::-1])[0]]
        perm = order[best_rank]
    else:
        perm = _swap_climb(dist, warr, n, seed, restarts, rank, tol)

    uniform = np.allclose(warr[~np.eye(n, dtype=bool)], warr[0, 1])
    prov = cb.provenance
    if not uniform and prov == Provenance.OPTIMIZED_UNWEIGHTED:
        prov = Provenance.OPTIMIZED_WEIGHTED
    return Codebook(cb.codes[perm], cb.k_hot, prov, cb.seed)


def _swap_climb(dist, warr, n, seed, restarts, rank, tol):
    rng = np.random.default_rng(seed)
    I, J = np.triu_indices(n, k=1)

    def value(p):
        return float(dist[p[I], p[J]] @ warr[I, J])

    results = []
    for r in range(restarts):
        p = np.arange(n) if r == 0 else rng.permutation(n)
        improved = True
        while improved:
            improved = False
            for a in range(n):
                for c in range(a + 1, n):
                    others = np.ones(n, dtype=bool)
                    others[[a, c]] = False
                    pj = p[others]
                    delta = float((warr[a, others] - warr[c, others]) @ (dist[p[c], pj] - dist[p[a], pj]))
                    if delta > tol:
                        p[a], p[c] = p[c], p[a]
                        improved = True
        results.append((value(p), p.copy()))
    top = max(v for v, _ in results)
    return min((p for v, p in results if v >= top - tol), key=lambda p: tuple(rank[p]))


# -- LP export -------------------------------------------------------------


def lp_variable_count(n: int, b: int) -> int:
    return n * b + math.comb(n, 2) * b


def _wrap_terms(terms: list[str], width: int = 8) -> str:
    lines = [" ".join(terms[i:i + width]) for i in range(0, len(terms), width)]
    return "\n   ".join(lines)


def _signed(terms: list[tuple[float, str]]) -> list[str]:
    out = []
    for idx, (coef, var) in enumerate(terms):
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        text = var if mag == 1 else f"{mag:.17g} {var}"
        out.append(text if idx == 0 and sign == "+" else f"{sign} {text}")
    return out


def format_lp(cfg: OptimizerConfig) -> str:
    """The codebook design problem as a CPLEX LP-format integer program.

    ``x_i_b`` is bit ``b`` of class ``i``; ``y_i_j_b`` linearizes
    ``x_i_b XOR x_j_b``.
    """
    n, b, k = cfg.n_classes, cfg.n_bits, cfg.k_hot
    w = cfg.weight_array()
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    out = [f"\\ K-hot codebook design: {n} classes, {b} bits, {k} hot", "Maximize"]
    obj_terms = [(float(w[i, j]), f"y_{i}_{j}_{t}") for i, j in pairs for t in range(b)]
    if obj_terms:
        out.append(" obj: " + _wrap_terms(_signed(obj_terms)))
    else:
        out.append(" obj: 0 x_0_0")
    out.append("Subject To")
    for i in range(n):
        out.append(f" pop_{i}: " + _wrap_terms(_signed([(1, f"x_{i}_{t}") for t in range(b)])) + f" = {k}")
    for i, j in pairs:
        for t in range(b):
            y, xi, xj = f"y_{i}_{j}_{t}", f"x_{i}_{t}", f"x_{j}_{t}"
            out.append(f" xa_{i}_{j}_{t}: {y} - {xi} + {xj} >= 0")
            out.append(f" xb_{i}_{j}_{t}: {y} + {xi} - {xj} >= 0")
            out.append(f" xc_{i}_{j}_{t}: {y} - {xi} - {xj} <= 0")
            out.append(f" xd_{i}_{j}_{t}: {y} + {xi} + {xj} <= 2")
        need = max(1, cfg.min_distance_floor or 0)
        terms = _signed([(1, f"y_{i}_{j}_{t}") for t in range(b)])
        out.append(f" dist_{i}_{j}: " + _wrap_terms(terms) + f" >= {need}")
    out.append("Binary")
    names = [f"x_{i}_{t}" for i in range(n) for t in range(b)]
    names += [f"y_{i}_{j}_{t}" for i, j in pairs for t in range(b)]
    for s in range(0, len(names), 10):
        out.append(" " + " ".join(names[s:s + 10]))
    out.append("End")
    return "\n".join(out) + "\n"


def export_lp(cfg: OptimizerConfig, path) -> None:
    text = format_lp(cfg)
    with open(path, "w") as fh:
        fh.write(text)
