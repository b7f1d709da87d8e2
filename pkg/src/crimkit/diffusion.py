"""Noise schedule, forward noising, and the conditional noise-prediction net.

The denoiser takes 7 input channels (noisy image, conditional image, mask),
predicts the noise, and is conditioned on the timestep plus a constant task
vector through learned affine maps to per-channel additive biases at each
resolution. No normalization layers; downsampling is average pooling and
upsampling is nearest-neighbor, so every conv runs at stride 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as tt
from .tensor import Tensor

# Keeps the terminal signal level strictly positive so noise-to-image
# conversion stays finite at the last timestep.
ALPHA_BAR_FLOOR = 1e-4

TASKS = ("removal", "insertion")


@dataclass
class NoiseSchedule:
    """Tables alpha_t, sigma_t for t = 0..T with alpha^2 + sigma^2 = 1."""

    T: int
    kind: str
    alpha: np.ndarray
    sigma: np.ndarray

    def check_t(self, t) -> None:
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T):
            raise ValueError(f"timestep {t} outside [0, {self.T}]")


def make_schedule(T: int, kind: str = "cosine") -> NoiseSchedule:
    if T < 10:
        raise ValueError(f"schedule needs T >= 10, got {T}")
    ts = np.arange(T + 1, dtype=np.float64)
    if kind == "cosine":
        s = 0.008
        f = np.cos(((ts / T) + s) / (1 + s) * math.pi / 2) ** 2
        abar = f / f[0]
    elif kind == "linear-beta":
        # endpoints referenced to T=1000; shorter tables scale the betas so
        # the terminal signal level stays near zero
        scale = 1000.0 / T
        betas = np.clip(np.linspace(1e-4, 0.02, T) * scale, 0.0, 0.999)
        abar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    abar = np.maximum(abar, ALPHA_BAR_FLOOR)
    abar = np.minimum.accumulate(abar)  # monotone even after the floor
    alpha = np.sqrt(abar).astype(np.float32)
    sigma = np.sqrt(1.0 - abar).astype(np.float32)
    return NoiseSchedule(T=T, kind=kind, alpha=alpha, sigma=sigma)


def add_noise(i_gt: np.ndarray, t, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Forward noising: alpha_t * I_gt + sigma_t * eps.

    ``t`` may be a scalar or a per-sample vector matching a batched input.
    """
    schedule.check_t(t)
    if i_gt.shape != eps.shape:
        raise ValueError(f"add_noise: image {i_gt.shape} vs noise {eps.shape}")
    t = np.asarray(t, dtype=np.int64)
    a = schedule.alpha[t]
    s = schedule.sigma[t]
    if t.ndim == 1:
        extra = (1,) * (i_gt.ndim - 1)
        a = a.reshape(t.shape[0], *extra)
        s = s.reshape(t.shape[0], *extra)
    return (a * i_gt + s * eps).astype(np.float32)


# ---------------------------------------------------------------------------
# Conditioning


def task_embeddings(d_c: int = 16) -> tuple:
    """Constant orthonormal task vectors (removal, insertion)."""
    c_r = np.zeros(d_c, dtype=np.float32)
    c_i = np.zeros(d_c, dtype=np.float32)
    c_r[0] = 1.0
    c_i[1] = 1.0
    return c_r, c_i


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps; (N, dim) float32."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float32))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float32) / half)
    args = t[:, None] * freqs[None]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(np.float32)


@dataclass
class ModelConfig:
    channels: tuple = (16, 32, 64)
    d_c: int = 16
    d_t: int = 32
    cond_hidden: int = 64
    image_size: int = 32

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class DenoiserModel:
    params: dict
    config: ModelConfig
    c_r: np.ndarray = field(default=None)
    c_i: np.ndarray = field(default=None)

    # trained models diffuse in [-1,1]; the sampler converts at the edges
    data_space = "image-scaled"

    def __post_init__(self):
        if self.c_r is None:
            self.c_r, self.c_i = task_embeddings(self.config.d_c)

    def task_vector(self, task: str) -> np.ndarray:
        if task == "removal":
            return self.c_r
        if task == "insertion":
            return self.c_i
        raise ValueError(f"unknown task {task!r} (expected one of {TASKS})")

    def eps(self, x_t: Tensor, t, x_cond: Tensor, m: Tensor, cvec: np.ndarray) -> Tensor:
        return model_forward(self.params, self.config, x_t, t, x_cond, m, cvec)

    def predict(self, x: np.ndarray, t, x_cond: np.ndarray, m: np.ndarray,
                task: str) -> np.ndarray:
        """Inference path: numpy in, numpy out, no gradient tape."""
        squeeze = x.ndim == 3
        if squeeze:
            x, x_cond, m = x[None], x_cond[None], m[None]
        if m.ndim == 3:
            m = m[:, None]
        _check_contract(x, x_cond, m)
        cvec = np.broadcast_to(self.task_vector(task), (x.shape[0], self.config.d_c))
        out = self.eps(Tensor(x), t, Tensor(x_cond), Tensor(m.astype(np.float32)), cvec)
        return out.data[0] if squeeze else out.data


def _check_contract(x, x_cond, m):
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"noisy input must be (N,3,H,W), got {x.shape}")
    if x_cond.shape != x.shape:
        raise ValueError(f"conditional image {x_cond.shape} must match noisy input {x.shape}")
    if m.shape != (x.shape[0], 1, x.shape[2], x.shape[3]):
        raise ValueError(f"mask must be (N,1,H,W) for input {x.shape}, got {m.shape}")


def init_model(seed: int = 0, config: ModelConfig | None = None) -> DenoiserModel:
    cfg = config or ModelConfig()
    rng = np.random.default_rng(np.random.SeedSequence([0x40DE1, seed]))
    c1, c2, c3 = cfg.channels
    params: dict[str, Tensor] = {}

    def conv(name, cin, cout, zero=False):
        if zero:
            w = np.zeros((cout, cin, 3, 3), dtype=np.float32)
        else:
            std = math.sqrt(2.0 / (cin * 9))
            w = rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(np.float32)
        params[name + ".w"] = Tensor(w, requires_grad=True)
        params[name + ".b"] = Tensor(np.zeros((cout, 1, 1), dtype=np.float32),
                                     requires_grad=True)

    def affine(name, din, dout):
        std = math.sqrt(1.0 / din)
        params[name + ".w"] = Tensor(rng.normal(0.0, std, size=(din, dout)).astype(np.float32),
                                     requires_grad=True)
        params[name + ".b"] = Tensor(np.zeros((dout,), dtype=np.float32), requires_grad=True)

    def block(name, c):
        conv(name + ".c1", c, c)
        conv(name + ".c2", c, c)
        affine(name + ".cond", cfg.cond_hidden, c)

    affine("cond0", cfg.d_t + cfg.d_c, cfg.cond_hidden)
    conv("stem", 7, c1)
    block("e1", c1)
    conv("t12", c1, c2)
    block("e2", c2)
    conv("t23", c2, c3)
    block("e3", c3)
    block("mid", c3)
    conv("u2", c3 + c2, c2)
    block("d2", c2)
    conv("u1", c2 + c1, c1)
    block("d1", c1)
    conv("head", c1, 3, zero=True)
    return DenoiserModel(params=params, config=cfg)


def _conv(params, name, h):
    return tt.add(tt.conv2d(h, params[name + ".w"], 1, 1), params[name + ".b"])


def _block(params, name, h, cond_h, n):
    c = params[name + ".c1.b"].shape[0]
    b = tt.add(tt.matmul(cond_h, params[name + ".cond.w"]), params[name + ".cond.b"])
    b = tt.reshape(b, (n, c, 1, 1))
    y = tt.add(_conv(params, name + ".c1", h), b)
    y = tt.silu(y)
    y = _conv(params, name + ".c2", y)
    return tt.silu(tt.add(h, y))


def model_forward(params: dict, cfg: ModelConfig, x_t: Tensor, t,
                  x_cond: Tensor, m: Tensor, cvec: np.ndarray) -> Tensor:
    """One denoiser evaluation; returns the predicted noise (N,3,H,W)."""
    n = x_t.shape[0]
    temb = time_embedding(np.broadcast_to(np.asarray(t), (n,)), cfg.d_t)
    cond_in = Tensor(np.concatenate([temb, np.asarray(cvec, dtype=np.float32)], axis=1))
    cond_h = tt.silu(tt.add(tt.matmul(cond_in, params["cond0.w"]), params["cond0.b"]))

    h = tt.concat_channels(tt.concat_channels(x_t, x_cond), m)
    h = _conv(params, "stem", h)
    e1 = _block(params, "e1", h, cond_h, n)
    h = _conv(params, "t12", tt.avgpool2x(e1))
    e2 = _block(params, "e2", h, cond_h, n)
    h = _conv(params, "t23", tt.avgpool2x(e2))
    h = _block(params, "e3", h, cond_h, n)
    h = _block(params, "mid", h, cond_h, n)
    h = _conv(params, "u2", tt.concat_channels(tt.nearest_upsample2x(h), e2))
    h = _block(params, "d2", h, cond_h, n)
    h = _conv(params, "u1", tt.concat_channels(tt.nearest_upsample2x(h), e1))
    h = _block(params, "d1", h, cond_h, n)
    return _conv(params, "head", h)
