"""A small dense network trained against binary codewords.

ReLU hidden layers, one sigmoid per output bit, per-bit binary cross-entropy
and mini-batch SGD with momentum. Everything is plain numpy in float64 so the
analytic gradients can be checked against finite differences.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .codes import Codebook
from .errors import CodebookParseError, DivergenceError
from .weights import ConfusionMatrix

CLAMP = 1e-7


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    n_classes: int

    def __post_init__(self):
        x = np.array(self.features, dtype=float, copy=True)
        y = np.array(self.labels, copy=True)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("features must be a non-empty (M, D) matrix")
        if y.shape != (x.shape[0],):
            raise ValueError(f"expected {x.shape[0]} labels, got shape {y.shape}")
        if y.size and not np.array_equal(y, np.round(y)):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        if self.n_classes < 1 or y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError(f"labels must lie in 0..{self.n_classes - 1}")
        if not np.isfinite(x).all():
            raise ValueError("features must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def with_features(self, features) -> "Dataset":
        return Dataset(features, self.labels, self.n_classes)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n_classes == other.n_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def __repr__(self):
        return f"Dataset(n_samples={self.n_samples}, dim={self.dim}, n_classes={self.n_classes})"


@dataclass(eq=False)
class MlpModel:
    """Weights are stored ``(fan_in, fan_out)`` so a layer is ``x @ W + b``."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer transition")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[l], self.layer_sizes[l + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {l}: expected W{shape} and b({shape[1]},), got {w.shape}, {b.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {l} has non-finite parameters")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_sizes), [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return self.layer_sizes == other.layer_sizes and all(
            np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters())
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")


def init_mlp(layer_sizes: Sequence[int], seed: int = 0) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    sizes = [int(s) for s in layer_sizes]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases)


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.n_inputs:
        raise ValueError(f"model expects {model.n_inputs} features, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("input contains non-finite values")
    return x, single


def _forward_cache(model: MlpModel, x: np.ndarray):
    acts = [x]
    pre = []
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        pre.append(z)
        acts.append(expit(z) if l == last else np.maximum(z, 0.0))
    return pre, acts


def forward(model: MlpModel, x) -> np.ndarray:
    """Per-bit output probabilities; a 1-D input gives a 1-D output."""
    x, single = _as_batch(model, x)
    probs = _forward_cache(model, x)[1][-1]
    return probs[0] if single else probs


def bce_loss(probs, target) -> float | np.ndarray:
    """Mean over bits of the binary cross-entropy; one value per row for 2-D input."""
    p = np.asarray(probs, dtype=float)
    c = np.asarray(target, dtype=float)
    if p.shape[-1] != c.shape[-1]:
        raise ValueError(f"width mismatch: {p.shape[-1]} probabilities vs {c.shape[-1]} target bits")
    p = np.clip(p, CLAMP, 1.0 - CLAMP)
    per_bit = -(c * np.log(p) + (1.0 - c) * np.log1p(-p))
    out = per_bit.mean(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def loss_and_grads(model: MlpModel, x, targets):
    """Batch-mean BCE, parameter gradients (same order as ``parameters()``) and d loss / d x.

    The input gradient is of the *summed* per-sample losses, so row m is the
    gradient of sample m's own loss.
    """
    x, _ = _as_batch(model, x)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = np.broadcast_to(targets, (x.shape[0], targets.size))
    if targets.shape != (x.shape[0], model.n_outputs):
        raise ValueError(f"targets must be ({x.shape[0]}, {model.n_outputs}), got {targets.shape}")
    m = x.shape[0]
    pre, acts = _forward_cache(model, x)
    p = acts[-1]
    loss = float(np.mean(bce_loss(p, targets)))
    inside = (p > CLAMP) & (p < 1.0 - CLAMP)
    # d(per-sample loss)/dz for sigmoid + BCE; zero where the clamp is active
    delta = np.where(inside, (p - targets) / model.n_outputs, 0.0)

    grads = [None] * (2 * len(model.weights))
    for l in range(len(model.weights) - 1, -1, -1):
        grads[2 * l] = acts[l].T @ delta / m
        grads[2 * l + 1] = delta.sum(axis=0) / m
        back = delta @ model.weights[l].T
        if l > 0:
            delta = back * (pre[l - 1] > 0)
    return loss, grads, back


def input_gradient(model: MlpModel, x, targets) -> np.ndarray:
    """Gradient of each sample's BCE against its target with respect to its input."""
    x = np.asarray(x, dtype=float)
    g = loss_and_grads(model, x, targets)[2]
    return g[0] if x.ndim == 1 else g


def _check_dims(model: MlpModel, data: Dataset, codebook: Codebook):
    if codebook.n_classes != data.n_classes:
        raise ValueError(f"codebook has {codebook.n_classes} classes, data has {data.n_classes}")
    if model.n_outputs != codebook.n_bits:
        raise ValueError(f"model has {model.n_outputs} outputs, codebook has {codebook.n_bits} bits")
    if model.n_inputs != data.dim:
        raise ValueError(f"model expects {model.n_inputs} features, data has {data.dim}")


def train(model: MlpModel, data: Dataset, codebook: Codebook, cfg: TrainConfig):
    """Fit a copy of ``model``; returns ``(trained_model, per_epoch_mean_loss)``."""
    _check_dims(model, data, codebook)
    model = model.copy()
    params = model.parameters()
    velocity = [np.zeros_like(p) for p in params]
    targets = codebook.codes.astype(float)[data.labels]
    rng = np.random.default_rng(cfg.seed)
    trace = []
    m = data.n_samples
    for epoch in range(cfg.epochs):
        order = rng.permutation(m)
        total = 0.0
        for start in range(0, m, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads, _ = loss_and_grads(model, data.features[idx], targets[idx])
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
                raise DivergenceError(f"non-finite loss or gradient in epoch {epoch}")
            total += loss * len(idx)
            for p, g, v in zip(params, grads, velocity):
                if cfg.weight_decay:
                    g = g + cfg.weight_decay * p
                v *= cfg.momentum
                v += g
                p -= cfg.learning_rate * v
        if not all(np.isfinite(p).all() for p in params):
            raise DivergenceError(f"parameters became non-finite in epoch {epoch}")
        trace.append(total / m)
    return model, trace


def codeword_scores(probs, codebook: Codebook) -> np.ndarray:
    """Summed BCE of every row of ``probs`` against every codeword, shape (M, N)."""
    p = np.clip(np.atleast_2d(np.asarray(probs, dtype=float)), CLAMP, 1.0 - CLAMP)
    if p.shape[1] != codebook.n_bits:
        raise ValueError(f"width mismatch: {p.shape[1]} probabilities vs {codebook.n_bits} code bits")
    c = codebook.codes.astype(float)
    return -(np.log(p) @ c.T + np.log1p(-p) @ (1.0 - c).T)


def decode(probs, codebook: Codebook, mode: str = "bce"):
    """Nearest codeword per row; ties go to the lowest class id.

    ``mode="bce"`` scores each codeword by its summed cross-entropy (maximum
    likelihood under independent bits). ``mode="hamming"`` thresholds at 0.5
    and counts differing bits.
    """
    single = np.ndim(probs) == 1
    if mode == "bce":
        scores = codeword_scores(probs, codebook)
        best = scores.min(axis=1, keepdims=True)
        tied = scores <= best + 1e-12 * np.maximum(1.0, np.abs(best))
    elif mode == "hamming":
        p = np.atleast_2d(np.asarray(probs, dtype=float))
        if p.shape[1] != codebook.n_bits:
            raise ValueError(f"width mismatch: {p.shape[1]} probabilities vs {codebook.n_bits} code bits")
        hard = (p > 0.5).astype(np.int64)
        c = codebook.codes.astype(np.int64)
        scores = hard @ (1 - c).T + (1 - hard) @ c.T
        tied = scores == scores.min(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown decode mode {mode!r}")
    cls = np.argmax(tied, axis=1)
    return int(cls[0]) if single else cls


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    confusion: ConfusionMatrix


def evaluate(model: MlpModel, data: Dataset, codebook: Codebook, mode: str = "bce") -> EvalResult:
    _check_dims(model, data, codebook)
    pred = decode(forward(model, data.features), codebook, mode=mode)
    counts = np.zeros((data.n_classes, data.n_classes), dtype=np.int64)
    np.add.at(counts, (data.labels, pred), 1)
    return EvalResult(float(np.mean(pred == data.labels)), ConfusionMatrix(counts))


# -- datasets --------------------------------------------------------------


def make_blobs(n_classes: int, dim: int, n_per_class: int, spread: float, seed: int,
               margin: float = 0.2) -> Dataset:
    """Gaussian blobs with centres uniform in ``[margin, 1 - margin]^dim``, clipped to [0, 1]."""
    rng = np.random.default_rng(seed)
    centres = rng.uniform(margin, 1.0 - margin, size=(n_classes, dim))
    labels = np.repeat(np.arange(n_classes), n_per_class)
    x = centres[labels] + rng.normal(0.0, spread, size=(labels.size, dim))
    order = rng.permutation(labels.size)
    return Dataset(np.clip(x[order], 0.0, 1.0), labels[order], n_classes)


def split(data: Dataset, n_first: int) -> tuple[Dataset, Dataset]:
    a = Dataset(data.features[:n_first], data.labels[:n_first], data.n_classes)
    b = Dataset(data.features[n_first:], data.labels[n_first:], data.n_classes)
    return a, b


def load_digits_dataset(n_classes: int = 10) -> Dataset:
    """The 8x8 scikit-learn digits, scaled to [0, 1]."""
    from sklearn.datasets import load_digits

    d = load_digits()
    keep = d.target < n_classes
    return Dataset(d.data[keep] / 16.0, d.target[keep], n_classes)


def format_dataset_csv(data: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label"] + [f"f{j}" for j in range(data.dim)])
    for label, row in zip(data.labels, data.features):
        writer.writerow([str(int(label))] + [repr(float(v)) for v in row])
    return buf.getvalue()


def parse_dataset_csv(text: str, n_classes: int | None = None) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CodebookParseError("dataset CSV is empty") from None
    dim = len(header) - 1
    if dim < 1 or header != ["label"] + [f"f{j}" for j in range(dim)]:
        raise CodebookParseError("dataset header must be 'label,f0,f1,...'")
    labels, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise CodebookParseError(f"line {lineno}: {len(row)} fields, expected {dim + 1}")
        try:
            labels.append(int(row[0]))
            rows.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise CodebookParseError(f"line {lineno}: {exc}") from exc
    if not rows:
        raise CodebookParseError("dataset has no samples")
    labels = np.array(labels)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    try:
        return Dataset(np.array(rows), labels, n_classes)
    except ValueError as exc:
        raise CodebookParseError(str(exc)) from exc


def save_dataset(data: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_dataset_csv(data))


def load_dataset(path, n_classes: int | None = None) -> Dataset:
    with open(path) as fh:
        return parse_dataset_csv(fh.read(), n_classes)


# -- checkpoints -----------------------------------------------------------


def model_to_json(model: MlpModel) -> str:
    doc = {
        "layer_sizes": model.layer_sizes,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    return json.dumps(doc) + "\n"


def model_from_json(text: str) -> MlpModel:
    try:
        doc = json.loads(text)
        sizes = [int(s) for s in doc["layer_sizes"]]
        weights = [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(doc["weights"], sizes[:-1], sizes[1:])]
        biases = [np.array(b, dtype=float).reshape(-1) for b in doc["biases"]]
        return MlpModel(sizes, weights, biases)
    except (KeyError, TypeError, ValueError) as exc:
        raise CodebookParseError(f"invalid model checkpoint: {exc}") from exc


def save_model(model: MlpModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> MlpModel:
    with open(path) as fh:
        return model_from_json(fh.read())
