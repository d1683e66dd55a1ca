"""Comparison codebooks: one-hot, Sylvester-Hadamard and random K-hot."""

from __future__ import annotations

from itertools import combinations
from math import comb

import numpy as np

from .codes import MIXED, Codebook, Provenance
from .errors import InfeasibleConfigError


def one_hot(n: int) -> Codebook:
    if n < 2:
        raise ValueError(f"one-hot needs at least 2 classes, got {n}")
    return Codebook(np.eye(n, dtype=np.uint8), 1, Provenance.ONE_HOT)


def sylvester(m: int) -> np.ndarray:
    """The +-1 Sylvester-Hadamard matrix of order 2**m."""
    h = np.ones((1, 1), dtype=np.int8)
    for _ in range(m):
        h = np.block([[h, h], [h, -h]])
    return h


def hadamard(n_classes: int, m: int) -> Codebook:
    """Rows 1..N of H_{2^m} without the constant column, +1 mapped to 1.

    Every pair of codewords is at distance exactly ``2**(m-1)``.
    """
    if m < 2:
        raise ValueError(f"Hadamard order exponent must be >= 2, got {m}")
    rows = 2**m - 1
    if n_classes > rows:
        raise InfeasibleConfigError(f"H-{rows} has only {rows} usable rows, {n_classes} classes requested")
    if n_classes < 1:
        raise ValueError("need at least one class")
    bits = (sylvester(m)[1:, 1:] > 0).astype(np.uint8)
    return Codebook(bits[:n_classes], MIXED, Provenance.HADAMARD)


def random_k_hot(n: int, b: int, k: int, seed: int) -> Codebook:
    """N distinct uniformly drawn K-hot words of length B."""
    if not 1 <= k <= b:
        raise ValueError(f"need 1 <= k <= b, got k={k}, b={b}")
    total = comb(b, k)
    if n > total:
        raise InfeasibleConfigError(f"only C({b},{k}) = {total} distinct {k}-hot words, {n} requested")
    rng = np.random.default_rng(seed)
    codes = np.zeros((n, b), dtype=np.uint8)
    if total <= 4 * n:
        # dense regime: rejection sampling would stall, draw from the full list
        pool = list(combinations(range(b), k))
        for row, idx in enumerate(rng.permutation(total)[:n]):
            codes[row, list(pool[idx])] = 1
    else:
        seen = set()
        row = 0
        while row < n:
            hot = tuple(sorted(rng.choice(b, size=k, replace=False).tolist()))
            if hot in seen:
                continue
            seen.add(hot)
            codes[row, list(hot)] = 1
            row += 1
    return Codebook(codes, k, Provenance.RANDOM, seed)
