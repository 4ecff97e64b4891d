"""A small beta-VAE with hand-written forward and backward passes.

Encoder: flatten -> tanh hidden -> (mu, logvar) heads. The decoder mirrors it
and ends in a sigmoid, so the reconstruction term is a per-pixel binary
cross-entropy summed over the image. Everything runs in float64 with numpy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .synthgen import ImageCrop

log = logging.getLogger(__name__)

LOGVAR_CLAMP = 10.0
BCE_EPS = 1e-7
ADAM_B1, ADAM_B2, ADAM_EPS = 0.9, 0.999, 1e-8

PARAM_NAMES = ("enc_w", "enc_b", "mu_w", "mu_b", "lv_w", "lv_b", "dec_w", "dec_b", "out_w", "out_b")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    beta: float = 0.1
    d: int = 8
    hidden_width: int = 128

    def __post_init__(self):
        for name in ("epochs", "batch_size", "d", "hidden_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if not (self.learning_rate > 0 and self.beta > 0):
            raise ValueError("learning_rate and beta must be positive")

    @classmethod
    def paper_scale(cls, seed: int = 0) -> "TrainConfig":
        return cls(epochs=750, batch_size=64, learning_rate=1e-4, d=32, beta=0.1, seed=seed)


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction: float
    kl: float
    total: float


@dataclass
class VaeParams:
    weights: dict
    input_shape: tuple
    beta: float

    def __post_init__(self):
        w = self.weights
        n_in = int(np.prod(self.input_shape))
        h, d = w["mu_w"].shape
        expected = {
            "enc_w": (n_in, h), "enc_b": (h,), "mu_w": (h, d), "mu_b": (d,),
            "lv_w": (h, d), "lv_b": (d,), "dec_w": (d, h), "dec_b": (h,),
            "out_w": (h, n_in), "out_b": (n_in,),
        }
        for name, shape in expected.items():
            if w[name].shape != shape:
                raise ValueError(f"{name}: shape {w[name].shape} != {shape}")
            if not np.all(np.isfinite(w[name])):
                raise ValueError(f"{name}: non-finite values")
        if d < 2:
            raise ValueError("latent dimension must be >= 2")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @property
    def d(self) -> int:
        return self.weights["mu_w"].shape[1]

    @property
    def hidden_width(self) -> int:
        return self.weights["mu_w"].shape[0]

    @property
    def n_inputs(self) -> int:
        return int(np.prod(self.input_shape))

    @classmethod
    def initialize(cls, input_shape, d: int, hidden_width: int, beta: float, seed: int = 0) -> "VaeParams":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng([seed, 0])
        n_in = int(np.prod(input_shape))
        dims = {"enc_w": (n_in, hidden_width), "mu_w": (hidden_width, d), "lv_w": (hidden_width, d),
                "dec_w": (d, hidden_width), "out_w": (hidden_width, n_in)}
        w = {}
        for name in PARAM_NAMES:
            if name.endswith("_w"):
                fan_in, fan_out = dims[name]
                lim = np.sqrt(6.0 / (fan_in + fan_out))
                w[name] = rng.uniform(-lim, lim, size=dims[name])
            else:
                w[name] = np.zeros(dims[name[:-1] + "w"][1])
        return cls(w, tuple(input_shape), beta)

    @classmethod
    def zeros(cls, input_shape, d: int, hidden_width: int, beta: float = 0.1) -> "VaeParams":
        p = cls.initialize(input_shape, d, hidden_width, beta)
        return cls({k: np.zeros_like(v) for k, v in p.weights.items()}, p.input_shape, beta)

    def to_dict(self) -> dict:
        return {
            "format": "beta-vae-mlp/1",
            "input_shape": list(self.input_shape),
            "d": self.d,
            "hidden_width": self.hidden_width,
            "beta": self.beta,
            "arrays": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.weights.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "VaeParams":
        w = {k: np.array(a["data"], dtype=np.float64).reshape(a["shape"]) for k, a in doc["arrays"].items()}
        return cls(w, tuple(doc["input_shape"]), float(doc["beta"]))


def _flatten(params: VaeParams, images) -> np.ndarray:
    if isinstance(images, ImageCrop):
        images = [images]
    arrs = [im.pixels if isinstance(im, ImageCrop) else np.asarray(im, dtype=np.float64) for im in images]
    for a in arrs:
        if a.shape != tuple(params.input_shape):
            raise ValueError(f"image shape {a.shape} does not match model input {tuple(params.input_shape)}")
    return np.stack([a.reshape(-1) for a in arrs]) if arrs else np.zeros((0, params.n_inputs))


def _encode_flat(w: dict, x: np.ndarray):
    h = np.tanh(x @ w["enc_w"] + w["enc_b"])
    mu = h @ w["mu_w"] + w["mu_b"]
    lv_raw = h @ w["lv_w"] + w["lv_b"]
    return h, mu, lv_raw, np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)


def _decode_logits(w: dict, z: np.ndarray):
    h = np.tanh(z @ w["dec_w"] + w["dec_b"])
    return h, h @ w["out_w"] + w["out_b"]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def encode(params: VaeParams, image) -> tuple[np.ndarray, np.ndarray]:
    _, mu, _, lv = _encode_flat(params.weights, _flatten(params, image))
    return mu[0], lv[0]


def decode(params: VaeParams, z) -> ImageCrop:
    _, logits = _decode_logits(params.weights, np.atleast_2d(np.asarray(z, dtype=np.float64)))
    return ImageCrop(_sigmoid(logits[0]).reshape(params.input_shape))


def kl_divergence(mu, logvar) -> float:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over dimensions."""
    mu = np.asarray(mu, dtype=np.float64)
    lv = np.asarray(logvar, dtype=np.float64)
    if mu.shape != lv.shape:
        raise ValueError("mu and logvar must have equal length")
    terms = np.maximum(np.expm1(lv) - lv, 0.0) + mu * mu
    return float(0.5 * terms.sum())


def elbo_loss(image, reconstruction, mu, logvar, beta: float) -> LossBreakdown:
    x = image.pixels if isinstance(image, ImageCrop) else np.asarray(image, dtype=np.float64)
    r = reconstruction.pixels if isinstance(reconstruction, ImageCrop) else np.asarray(reconstruction, dtype=np.float64)
    if x.shape != r.shape:
        raise ValueError(f"reconstruction shape {r.shape} != image shape {x.shape}")
    clipped = np.clip(r, BCE_EPS, 1.0 - BCE_EPS)
    n_clamped = int(np.count_nonzero(clipped != r))
    if n_clamped:
        log.warning("clamped %d reconstruction values to [%g, 1-%g]", n_clamped, BCE_EPS, BCE_EPS)
    recon = float(-(x * np.log(clipped) + (1.0 - x) * np.log1p(-clipped)).sum())
    kl = kl_divergence(mu, logvar)
    return LossBreakdown(recon, kl, recon + beta * kl)


def loss_and_grads(params: VaeParams, x: np.ndarray, eps: np.ndarray, beta: float | None = None):
    """Batch-mean loss and its exact gradient for fixed noise ``eps``.

    Returns ``(LossBreakdown, grads)`` with ``grads`` keyed like ``params.weights``.
    """
    return _loss_and_grads(params.weights, x, eps, params.beta if beta is None else beta)


def _loss_and_grads(w: dict, x: np.ndarray, eps: np.ndarray, beta: float):
    n = x.shape[0]

    h1, mu, lv_raw, lv = _encode_flat(w, x)
    std = np.exp(0.5 * lv)
    z = mu + std * eps
    h3, logits = _decode_logits(w, z)

    recon = (np.logaddexp(0.0, logits) - x * logits).sum(axis=1)
    kl = 0.5 * (np.maximum(np.expm1(lv) - lv, 0.0) + mu * mu).sum(axis=1)
    r_mean, kl_mean = float(recon.mean()), float(kl.mean())
    loss = LossBreakdown(r_mean, kl_mean, r_mean + beta * kl_mean)

    g = {}
    d_logits = (_sigmoid(logits) - x) / n
    g["out_w"] = h3.T @ d_logits
    g["out_b"] = d_logits.sum(axis=0)
    d_a3 = (d_logits @ w["out_w"].T) * (1.0 - h3 * h3)
    g["dec_w"] = z.T @ d_a3
    g["dec_b"] = d_a3.sum(axis=0)
    d_z = d_a3 @ w["dec_w"].T

    d_mu = d_z + beta * mu / n
    d_lv = d_z * eps * 0.5 * std + beta * 0.5 * np.expm1(lv) / n
    d_lv = d_lv * (np.abs(lv_raw) <= LOGVAR_CLAMP)
    g["mu_w"] = h1.T @ d_mu
    g["mu_b"] = d_mu.sum(axis=0)
    g["lv_w"] = h1.T @ d_lv
    g["lv_b"] = d_lv.sum(axis=0)
    d_a1 = (d_mu @ w["mu_w"].T + d_lv @ w["lv_w"].T) * (1.0 - h1 * h1)
    g["enc_w"] = x.T @ d_a1
    g["enc_b"] = d_a1.sum(axis=0)
    return loss, g


def batch_noise(seed: int, epoch: int, batch: int, n: int, d: int) -> np.ndarray:
    """Reparameterisation noise; row i belongs to sample i of that batch."""
    return np.random.default_rng([seed, 2, epoch, batch]).standard_normal((n, d))


@dataclass
class _Adam:
    lr: float
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    def step(self, weights: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - ADAM_B1 ** self.t
        c2 = 1.0 - ADAM_B2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k, 0.0) * ADAM_B1 + (1.0 - ADAM_B1) * g
            v = self.v.get(k, 0.0) * ADAM_B2 + (1.0 - ADAM_B2) * g * g
            self.m[k], self.v[k] = m, v
            weights[k] = weights[k] - self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def train(crops, config: TrainConfig, progress=None):
    """Fit a VAE on ``crops``; returns ``(params, history)``.

    ``history[e]`` is the sample-weighted mean LossBreakdown seen during epoch e.
    """
    if len(crops) < 2 * config.batch_size:
        raise ValueError(f"need at least {2 * config.batch_size} crops, got {len(crops)}")
    shape = crops[0].pixels.shape
    params = VaeParams.initialize(shape, config.d, config.hidden_width, config.beta, config.seed)
    x_all = _flatten(params, crops)
    n = x_all.shape[0]
    weights = dict(params.weights)
    opt = _Adam(config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, 1, epoch]).permutation(n)
        sums = np.zeros(3)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            eps = batch_noise(config.seed, epoch, b, len(idx), config.d)
            loss, grads = _loss_and_grads(weights, x_all[idx], eps, config.beta)
            if not np.isfinite(loss.total):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {b}: {loss}")
            opt.step(weights, grads)
            sums += len(idx) * np.array([loss.reconstruction, loss.kl, loss.total])
        r, k, t = sums / n
        history.append(LossBreakdown(float(r), float(k), float(t)))
        if progress is not None:
            progress(epoch, history[-1])
    return VaeParams(weights, params.input_shape, config.beta), history


def embed_dataset(params: VaeParams, crops) -> np.ndarray:
    """N x d matrix of encoder means, one row per crop."""
    _, mu, _, _ = _encode_flat(params.weights, _flatten(params, crops))
    return mu


def traverse(params: VaeParams, base_z, dim: int, lo: float, hi: float, steps: int) -> list[ImageCrop]:
    base_z = np.asarray(base_z, dtype=np.float64)
    if base_z.shape != (params.d,):
        raise ValueError(f"base_z must have length {params.d}")
    if not 0 <= dim < params.d:
        raise ValueError(f"dim {dim} out of range [0, {params.d})")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    out = []
    for v in np.linspace(lo, hi, steps):
        z = base_z.copy()
        z[dim] = v
        out.append(decode(params, z))
    return out
