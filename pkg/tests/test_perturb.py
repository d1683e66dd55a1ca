import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mute.baselines import one_hot
from mute.codes import Codebook, Provenance
from mute.nn import TrainConfig, bce_loss, evaluate, forward, init_mlp, make_blobs, train
from mute.perturb import (
    PerturbationSpec,
    apply,
    fgsm,
    gaussian_blur,
    gaussian_kernel,
    negative,
    parse_spec,
    salt_pepper,
    square_shape,
)

images = arrays(np.float64, (3, 25), elements=st.floats(0, 1))


@given(images)
def test_negative_is_an_involution(x):
    assert np.allclose(negative(negative(x)), x, rtol=0, atol=2.3e-16)
    assert negative(x).min() >= 0 and negative(x).max() <= 1


def test_negative_rejects_out_of_range():
    with pytest.raises(ValueError):
        negative([0.5, 1.5])


def test_blur_constant_image_is_fixed():
    for c in (0.0, 0.3, 1.0):
        x = np.full(64, c)
        assert np.allclose(gaussian_blur(x, (8, 8), 1.3), c, atol=1e-12)


def test_blur_impulse_center():
    x = np.zeros(21 * 21)
    x[10 * 21 + 10] = 1.0
    out = gaussian_blur(x, (21, 21), 1.0)
    denom = sum(math.exp(-t * t / 2) for t in range(-3, 4))
    assert out[10 * 21 + 10] == pytest.approx((1 / denom) ** 2, rel=1e-12)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)  # far from the border, mass is conserved


def test_blur_kernel_shape():
    k = gaussian_kernel(0.5)
    assert len(k) == 2 * math.ceil(1.5) + 1
    assert k.sum() == pytest.approx(1.0)
    assert np.array_equal(k, k[::-1])
    with pytest.raises(ValueError):
        gaussian_blur(np.zeros(16), (4, 4), 0.0)
    with pytest.raises(ValueError):
        gaussian_blur(np.zeros(16), (3, 5), 1.0)


@given(images, images, st.floats(-2, 2), st.floats(0.3, 2.0))
def test_blur_is_linear_without_clipping(x, y, a, sigma):
    lhs = gaussian_blur(x + a * y, (5, 5), sigma, clip=False)
    rhs = gaussian_blur(x, (5, 5), sigma, clip=False) + a * gaussian_blur(y, (5, 5), sigma, clip=False)
    assert np.allclose(lhs, rhs, atol=1e-10)


@given(images, st.floats(0.1, 3.0))
def test_blur_stays_within_input_range(x, sigma):
    # a normalized non-negative kernel is a convex combination of pixels
    out = gaussian_blur(x, (5, 5), sigma, clip=False)
    assert (out >= x.min(axis=1, keepdims=True) - 1e-12).all()
    assert (out <= x.max(axis=1, keepdims=True) + 1e-12).all()


def test_salt_pepper_examples(rng):
    x = rng.random((10, 100))
    assert np.array_equal(salt_pepper(x, 0.0, 1), x)
    full = salt_pepper(x, 1.0, 1)
    assert set(np.unique(full)) <= {0.0, 1.0}
    for p in (0.05, 0.125, 0.3):
        out = salt_pepper(x, p, 3)
        changed = (out != x).sum(axis=1)
        # a pixel can be overwritten with its own value only if it was already 0 or 1
        assert (changed <= math.floor(p * 100 + 0.5)).all()
        assert (changed >= math.floor(p * 100 + 0.5) - 2).all()
    assert np.array_equal(salt_pepper(x, 0.1, 9), salt_pepper(x, 0.1, 9))
    assert not np.array_equal(salt_pepper(x, 0.1, 9), salt_pepper(x, 0.1, 10))


def test_salt_pepper_exact_count_on_midgray():
    x = np.full((5, 40), 0.5)
    for p in (0.0, 0.01, 0.0125, 0.5, 0.99):
        out = salt_pepper(x, p, 0)
        assert ((out != 0.5).sum(axis=1) == math.floor(p * 40 + 0.5)).all()


def _small_model(seed=0):
    return init_mlp([6, 5, 4], seed)


def test_fgsm_zero_epsilon_is_identity(rng):
    cb = Codebook.from_strings(["1100", "0110", "0011"], 2, Provenance.RANDOM)
    x = rng.random((8, 6))
    y = rng.integers(0, 3, 8)
    assert np.array_equal(fgsm(_small_model(), cb, x, y, 0.0), x)


def test_fgsm_step_is_signed_gradient(rng):
    cb = Codebook.from_strings(["1100", "0110", "0011"], 2, Provenance.RANDOM)
    m = _small_model(1)
    x = 0.2 + 0.6 * rng.random((8, 6))  # interior, so no clipping at eps 0.1
    y = rng.integers(0, 3, 8)
    out = fgsm(m, cb, x, y, 0.1)
    steps = np.round((out - x) / 0.1, 9)
    assert set(np.unique(steps)) <= {-1.0, 0.0, 1.0}
    # sign agrees with a finite-difference input gradient
    h = 1e-6
    for s in range(3):
        t = cb.codes[y[s]].astype(float)
        fd = np.array([
            (bce_loss(forward(m, x[s] + h * e), t) - bce_loss(forward(m, x[s] - h * e), t)) / (2 * h)
            for e in np.eye(6)
        ])
        big = np.abs(fd) > 1e-6
        assert np.array_equal(np.sign(fd[big]), steps[s][big])
    # loss goes up to first order
    for s in range(8):
        t = cb.codes[y[s]].astype(float)
        assert bce_loss(forward(m, out[s]), t) >= bce_loss(forward(m, x[s]), t) - 1e-12


def test_fgsm_keeps_range(rng):
    cb = one_hot(4)
    x = rng.random((20, 6))
    out = fgsm(_small_model(), cb, x, rng.integers(0, 4, 20), 0.5)
    assert out.min() >= 0 and out.max() <= 1
    with pytest.raises(ValueError):
        fgsm(_small_model(), one_hot(3), x, rng.integers(0, 3, 20), 0.1)


def test_fgsm_accuracy_is_monotone_in_epsilon():
    data = make_blobs(4, 16, 40, 0.15, seed=0)
    cb = one_hot(4)
    m, _ = train(init_mlp([16, 32, 4], 0), data, cb, TrainConfig(epochs=100, batch_size=32))
    accs = []
    for eps in (0.0, 0.05, 0.1, 0.2, 0.3):
        spec = PerturbationSpec("fgsm", epsilon=eps)
        accs.append(evaluate(m, apply(spec, data, m, cb), cb).accuracy)
    assert accs[0] > 0.9
    inversions = [b - a for a, b in zip(accs, accs[1:]) if b > a]
    assert len(inversions) <= 1 and all(d <= 0.01 for d in inversions)
    assert accs[-1] < accs[0]


def test_parse_spec():
    assert parse_spec("negative") == PerturbationSpec("negative")
    assert parse_spec("blur:sigma=1.5", (8, 8)) == PerturbationSpec("gaussian_blur", sigma=1.5, image_shape=(8, 8))
    assert parse_spec("sp:p=0.05,seed=3") == PerturbationSpec("salt_pepper", p=0.05, seed=3)
    assert parse_spec("fgsm:eps=0.1").label == "fgsm:eps=0.1"
    assert parse_spec("salt_pepper:p=0.05,seed=3").label == "sp:p=0.05,seed=3"
    assert parse_spec("gaussian_blur:sigma=1").label == "blur:sigma=1"
    for bad in ("rotate", "blur", "blur:sigma=-1", "sp:p=2", "fgsm:eps=0.1,p=0.2", "fgsm:eps", "sp:q=1"):
        with pytest.raises(ValueError):
            parse_spec(bad)


def test_square_shape():
    assert square_shape(64) == (8, 8)
    with pytest.raises(ValueError):
        square_shape(10)


def test_apply_fgsm_needs_model():
    data = make_blobs(2, 4, 3, 0.1, seed=0)
    with pytest.raises(ValueError):
        apply(PerturbationSpec("fgsm", epsilon=0.1), data)
    blurred = apply(PerturbationSpec("gaussian_blur", sigma=1.0), data)
    assert np.array_equal(blurred.labels, data.labels)
