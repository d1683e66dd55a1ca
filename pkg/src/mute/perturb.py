"""Test-set corruptions: negative, Gaussian blur, salt-and-pepper, FGSM.

Every function takes a single sample ``(D,)`` or a batch ``(M, D)`` of
flattened images with values in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import correlate1d

from .codes import Codebook
from .nn import Dataset, MlpModel, input_gradient

KINDS = ("negative", "gaussian_blur", "salt_pepper", "fgsm")
_ALIASES = {"negative": "negative", "blur": "gaussian_blur", "gaussian_blur": "gaussian_blur",
            "sp": "salt_pepper", "salt_pepper": "salt_pepper", "fgsm": "fgsm"}


def _check_unit(x: np.ndarray):
    if not np.isfinite(x).all() or x.min(initial=0.0) < 0.0 or x.max(initial=0.0) > 1.0:
        raise ValueError("pixel values must lie in [0, 1]")


def negative(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check_unit(x)
    return 1.0 - x


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps over radius ``ceil(3 sigma)``."""
    radius = math.ceil(3 * sigma)
    t = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-(t**2) / (2 * sigma**2))
    return k / k.sum()


def gaussian_blur(x, shape: tuple[int, int], sigma: float, clip: bool = True) -> np.ndarray:
    """Separable Gaussian blur with reflect padding (edge pixel repeated)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=float)
    h, w = shape
    if x.shape[-1] != h * w:
        raise ValueError(f"image shape {h}x{w} does not match {x.shape[-1]} features")
    k = gaussian_kernel(sigma)
    img = x.reshape(x.shape[:-1] + (h, w))
    out = correlate1d(img, k, axis=-1, mode="reflect")
    out = correlate1d(out, k, axis=-2, mode="reflect")
    out = out.reshape(x.shape)
    return np.clip(out, 0.0, 1.0) if clip else out


def salt_pepper(x, p: float, seed: int) -> np.ndarray:
    """Set exactly ``round(p * D)`` pixels per sample to 0 or 1 (fair coin)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    x = np.asarray(x, dtype=float)
    _check_unit(x)
    batch = np.atleast_2d(x).copy()
    d = batch.shape[1]
    count = int(math.floor(p * d + 0.5))
    rng = np.random.default_rng(seed)
    for row in batch:
        idx = rng.choice(d, size=count, replace=False)
        row[idx] = rng.integers(0, 2, size=count)
    return batch[0] if x.ndim == 1 else batch


def fgsm(model: MlpModel, codebook: Codebook, x, true_class, epsilon: float) -> np.ndarray:
    """One signed-gradient ascent step on the BCE against the true codeword, clipped to [0, 1]."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    x = np.asarray(x, dtype=float)
    labels = np.atleast_1d(np.asarray(true_class))
    if model.n_outputs != codebook.n_bits:
        raise ValueError(f"model has {model.n_outputs} outputs, codebook has {codebook.n_bits} bits")
    batch = np.atleast_2d(x)
    if labels.shape != (batch.shape[0],):
        raise ValueError("need one true class per sample")
    targets = codebook.codes.astype(float)[labels]
    g = input_gradient(model, batch, targets)
    if not np.isfinite(g).all():
        raise ValueError("input gradient is not finite")
    out = np.clip(batch + epsilon * np.sign(g), 0.0, 1.0)
    return out[0] if x.ndim == 1 else out


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    sigma: Optional[float] = None
    p: Optional[float] = None
    epsilon: Optional[float] = None
    seed: int = 0
    image_shape: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        need = {"gaussian_blur": "sigma", "salt_pepper": "p", "fgsm": "epsilon"}.get(self.kind)
        for name in ("sigma", "p", "epsilon"):
            present = getattr(self, name) is not None
            if name == need and not present:
                raise ValueError(f"{self.kind} requires {name}")
            if name != need and present:
                raise ValueError(f"{self.kind} does not take {name}")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.p is not None and not 0 <= self.p <= 1:
            raise ValueError("p must be in [0, 1]")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")

    @property
    def label(self) -> str:
        if self.kind == "negative":
            return "negative"
        if self.kind == "gaussian_blur":
            return f"blur:sigma={self.sigma:g}"
        if self.kind == "salt_pepper":
            return f"sp:p={self.p:g},seed={self.seed}"
        return f"fgsm:eps={self.epsilon:g}"


def parse_spec(text: str, image_shape: Optional[tuple[int, int]] = None) -> PerturbationSpec:
    """Parse ``negative``, ``blur:sigma=1``, ``sp:p=0.02,seed=7`` or ``fgsm:eps=0.1``."""
    name, _, rest = text.strip().partition(":")
    kind = _ALIASES.get(name.strip())
    if kind is None:
        raise ValueError(f"unknown perturbation {name!r}")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"malformed parameter {item!r} in {text!r}")
        params[key.strip()] = value.strip()
    rename = {"sigma": "sigma", "p": "p", "eps": "epsilon", "epsilon": "epsilon", "seed": "seed"}
    kwargs = {}
    for key, value in params.items():
        if key not in rename:
            raise ValueError(f"unknown parameter {key!r} in {text!r}")
        kwargs[rename[key]] = int(value) if key == "seed" else float(value)
    return PerturbationSpec(kind, image_shape=image_shape, **kwargs)


def square_shape(d: int) -> tuple[int, int]:
    side = math.isqrt(d)
    if side * side != d:
        raise ValueError(f"{d} features is not a square image; give the shape explicitly")
    return side, side


def apply(spec: PerturbationSpec, data: Dataset, model: MlpModel | None = None,
          codebook: Codebook | None = None) -> Dataset:
    x = data.features
    if spec.kind == "negative":
        out = negative(x)
    elif spec.kind == "gaussian_blur":
        shape = spec.image_shape or square_shape(data.dim)
        out = gaussian_blur(x, shape, spec.sigma)
    elif spec.kind == "salt_pepper":
        out = salt_pepper(x, spec.p, spec.seed)
    else:
        if model is None or codebook is None:
            raise ValueError("fgsm needs a model and a codebook")
        out = fgsm(model, codebook, x, data.labels, spec.epsilon)
    return data.with_features(out)
