import math

import numpy as np
import pytest

from mute.baselines import one_hot
from mute.codes import Codebook, Provenance
from mute.errors import DivergenceError
from mute.nn import (
    CLAMP,
    Dataset,
    MlpModel,
    TrainConfig,
    bce_loss,
    decode,
    evaluate,
    forward,
    init_mlp,
    input_gradient,
    load_dataset,
    load_digits_dataset,
    load_model,
    loss_and_grads,
    make_blobs,
    model_from_json,
    model_to_json,
    parse_dataset_csv,
    save_dataset,
    save_model,
    split,
    train,
)
from mute.errors import CodebookParseError


def numeric_param_grads(model, x, t, h=1e-4):
    out = []
    for p in model.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_and_grads(model, x, t)[0]
            p[idx] = old - h
            down = loss_and_grads(model, x, t)[0]
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def rel_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


def test_forward_basics():
    m = init_mlp([3, 4, 5], 0)
    for w in m.weights:
        w[:] = 0
    assert np.all(forward(m, np.ones(3)) == 0.5)

    m = init_mlp([6, 8, 4], 1)
    x = np.random.default_rng(0).normal(size=(20, 6)) * 10
    p = forward(m, x)
    assert ((p > 0) & (p < 1)).all()
    assert np.allclose(forward(m, x[7]), p[7], rtol=0, atol=1e-15)

    with pytest.raises(ValueError):
        forward(m, np.ones(5))
    with pytest.raises(ValueError):
        forward(m, np.full(6, np.nan))


def test_bce_examples():
    assert bce_loss([1.0, 0.0, 1.0], [1, 0, 1]) < 1e-6
    assert bce_loss([0.5] * 4, [1, 0, 0, 1]) == pytest.approx(math.log(2), abs=1e-12)
    expected = (-math.log(0.9) - math.log(0.8) - math.log(0.8)) / 3
    assert bce_loss([0.9, 0.8, 0.2], [1, 1, 0]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.1839, abs=1e-4)
    with pytest.raises(ValueError):
        bce_loss([0.5, 0.5], [1, 0, 1])


def test_decode_examples():
    cb = Codebook.from_strings(["110", "011"], 2, Provenance.RANDOM)
    assert decode([0.9, 0.8, 0.2], cb) == 0
    scores = [-(math.log(0.9) + math.log(0.8) + math.log(0.8)), -(math.log(0.1) + math.log(0.8) + math.log(0.2))]
    assert scores[0] == pytest.approx(0.551, abs=1e-3) and scores[1] == pytest.approx(4.135, abs=1e-3)
    assert decode([0.5, 0.5, 0.5], cb) == 0
    assert decode([0.5] * 4, Codebook.from_strings(["1100", "0011", "1010"], 2, Provenance.RANDOM)) == 0
    with pytest.raises(ValueError):
        decode([0.5, 0.5], cb)
    assert decode([0.9, 0.2, 0.8], cb, mode="hamming") == 0  # 101 is 1 from both, tie -> 0
    assert decode([0.1, 0.6, 0.9], cb, mode="hamming") == 1


def test_decode_codeword_as_probs(rng):
    from .conftest import random_codebook

    for _ in range(40):
        cb = random_codebook(rng)
        probs = np.clip(cb.codes.astype(float), CLAMP, 1 - CLAMP)
        assert decode(probs, cb).tolist() == list(range(cb.n_classes))


def test_decode_permutation_equivariance(rng):
    from .conftest import random_codebook

    for _ in range(20):
        cb = random_codebook(rng, n=5, b=7, k=3)
        perm = rng.permutation(5)
        permuted = Codebook(cb.codes[perm], cb.k_hot, cb.provenance)
        probs = rng.random((50, 7))
        a = decode(probs, cb)
        b = decode(probs, permuted)
        # permuted class c holds original class perm[c]
        assert np.array_equal(perm[b], a)


@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(2, 5))]
    m = init_mlp(sizes, seed)
    for b in m.biases:
        b[:] = rng.normal(0, 0.3, size=b.shape)
    x = rng.random((4, sizes[0]))
    t = rng.integers(0, 2, size=(4, sizes[-1])).astype(float)
    _, grads, dx = loss_and_grads(m, x, t)
    for a, n in zip(grads, numeric_param_grads(m, x, t)):
        assert rel_error(a, n) < 1e-4


def test_five_parameter_model_gradient():
    m = init_mlp([2, 1, 1], 3)
    m.biases[0][:] = 0.5
    assert m.n_parameters() == 5
    x = np.array([[0.3, 0.7]])
    t = np.array([[1.0]])
    _, grads, _ = loss_and_grads(m, x, t)
    for a, n in zip(grads, numeric_param_grads(m, x, t)):
        assert rel_error(a, n) < 1e-4


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    m = init_mlp([5, 6, 3], 7)
    x = rng.random(5)
    t = np.array([1.0, 0.0, 1.0])
    g = input_gradient(m, x, t)
    h = 1e-4
    num = np.array([
        (bce_loss(forward(m, x + h * e), t) - bce_loss(forward(m, x - h * e), t)) / (2 * h) for e in np.eye(5)
    ])
    assert rel_error(g, num) < 1e-4


def blobs2():
    return make_blobs(2, 2, 50, 0.03, seed=3, margin=0.25)


def test_zero_learning_rate_keeps_parameters():
    data = blobs2()
    m0 = init_mlp([2, 8, 2], 0)
    m1, trace = train(m0, data, one_hot(2), TrainConfig(learning_rate=0.0, weight_decay=0.0, epochs=3, batch_size=16))
    assert m1 == m0
    assert max(trace) - min(trace) < 1e-12


def test_separable_blobs_are_fit():
    data = blobs2()
    assert abs(data.features[data.labels == 0].mean(0) - data.features[data.labels == 1].mean(0)).max() > 0.1
    m, trace = train(init_mlp([2, 16, 2], 0), data, one_hot(2), TrainConfig(epochs=50, batch_size=16))
    assert evaluate(m, data, one_hot(2)).accuracy == 1.0
    assert trace[-1] < trace[0]


def test_training_is_deterministic():
    data = make_blobs(3, 4, 30, 0.1, seed=1)
    cb = one_hot(3)
    cfg = TrainConfig(epochs=5, batch_size=16, seed=4)
    a, ta = train(init_mlp([4, 8, 3], 2), data, cb, cfg)
    b, tb = train(init_mlp([4, 8, 3], 2), data, cb, cfg)
    assert a == b and ta == tb


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
def test_training_dimension_checks_and_divergence():
    data = make_blobs(3, 4, 10, 0.1, seed=1)
    with pytest.raises(ValueError):
        train(init_mlp([4, 8, 4], 0), data, one_hot(3), TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        train(init_mlp([5, 8, 3], 0), data, one_hot(3), TrainConfig(epochs=1))
    with pytest.raises(DivergenceError):
        train(init_mlp([4, 8, 3], 0), data, one_hot(3), TrainConfig(epochs=20, learning_rate=1e200, batch_size=4))


def test_evaluate_consistency():
    data = make_blobs(4, 6, 25, 0.2, seed=2)
    m = init_mlp([6, 10, 4], 1)
    res = evaluate(m, data, one_hot(4))
    assert res.accuracy == pytest.approx(np.trace(res.confusion.counts) / data.n_samples, abs=1e-15)
    assert res.confusion.counts.sum(axis=1).tolist() == np.bincount(data.labels, minlength=4).tolist()


def test_evaluate_constant_model_is_chance():
    labels = np.repeat(np.arange(4), 5)
    data = Dataset(np.random.default_rng(0).random((20, 3)), labels, 4)
    m = init_mlp([3, 4], 0)
    m.weights[0][:] = 0
    m.biases[0][:] = [3.0, -3.0, -3.0, -3.0]
    assert evaluate(m, data, one_hot(4)).accuracy == 0.25


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), [0, 3], 3)
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf, 0.0]]), [0], 1)
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)), [], 1)


def test_dataset_csv_round_trip(tmp_path, rng):
    data = make_blobs(3, 5, 7, 0.2, seed=9)
    save_dataset(data, tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "label,f0,f1,f2,f3,f4"
    assert load_dataset(tmp_path / "d.csv", 3) == data
    with pytest.raises(CodebookParseError):
        parse_dataset_csv("label,x\n0,0.5\n")
    with pytest.raises(CodebookParseError):
        parse_dataset_csv("label,f0\n0,0.5,0.2\n")


def test_checkpoint_round_trip(tmp_path):
    m = init_mlp([4, 7, 3], 5)
    save_model(m, tmp_path / "m.json")
    assert load_model(tmp_path / "m.json") == m
    assert model_to_json(model_from_json(model_to_json(m))) == model_to_json(m)
    with pytest.raises(CodebookParseError):
        model_from_json('{"layer_sizes": [2, 3]}')


def test_split_and_digits():
    data = make_blobs(3, 4, 10, 0.1, seed=0)
    a, b = split(data, 12)
    assert a.n_samples == 12 and b.n_samples == 18
    pytest.importorskip("sklearn")
    digits = load_digits_dataset(4)
    assert digits.dim == 64 and digits.n_classes == 4
    assert digits.features.min() >= 0 and digits.features.max() <= 1


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(weight_decay=-1)
    with pytest.raises(ValueError):
        MlpModel([2, 2], [np.zeros((2, 3))], [np.zeros(2)])
