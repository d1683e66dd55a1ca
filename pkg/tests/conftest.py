import os
import re
from itertools import combinations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mute.codes import Codebook, Provenance

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: (int(re.match(r"C(\d+)", c).group(1)), c)):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {cid}  {detail}")


def random_codebook(rng: np.random.Generator, n=None, b=None, k=None) -> Codebook:
    """A valid K-hot codebook with random parameters."""
    while True:
        b = b or int(rng.integers(2, 12))
        k = k or int(rng.integers(1, b))
        words = list(combinations(range(b), k))
        n = n or int(rng.integers(1, min(len(words), 12) + 1))
        if n <= len(words):
            break
        n = None
    codes = np.zeros((n, b), dtype=np.uint8)
    for row, idx in enumerate(rng.choice(len(words), size=n, replace=False)):
        codes[row, list(words[idx])] = 1
    prov = list(Provenance)[int(rng.integers(len(Provenance)))]
    seed = None if rng.random() < 0.3 else int(rng.integers(0, 2**63))
    return Codebook(codes, k, prov, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
