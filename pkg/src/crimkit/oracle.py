"""Closed-form Gaussian stand-ins for the two task conditionals.

For data x0 ~ N(mu, s^2 I) under the variance-preserving forward process,
the optimal noise prediction at timestep t is

    eps*(x_t) = sigma_t * (x_t - alpha_t * mu) / (alpha_t^2 s^2 + sigma_t^2)

which equals -sigma_t times the score of the marginal. Affine guidance
between two equal-variance fields therefore samples a tilted Gaussian whose
mean is the same affine combination of the means - making the guidance
math exactly checkable without any training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import NoiseSchedule

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class GaussianTaskField:
    mu: np.ndarray  # per-pixel mean, (3,H,W)
    s: float        # shared scalar std > 0

    def validate(self):
        if not self.s > 0:
            raise ValueError(f"field std must be > 0, got {self.s}")
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("field mean contains non-finite values")


@dataclass
class TiltedGaussian:
    mean: np.ndarray
    variance: float


def analytic_eps(field: GaussianTaskField, x_t: np.ndarray, t: int,
                 schedule: NoiseSchedule) -> np.ndarray:
    """Exact optimal noise prediction for a Gaussian data distribution."""
    field.validate()
    schedule.check_t(t)
    a = np.float32(schedule.alpha[t])
    sig = np.float32(schedule.sigma[t])
    denom = np.float32(a * a * field.s * field.s + sig * sig)
    return (sig * (x_t - a * field.mu) / denom).astype(np.float32)


def marginal_logpdf(field: GaussianTaskField, x: np.ndarray, t: int,
                    schedule: NoiseSchedule) -> np.ndarray:
    """Log density of the forward marginal at t, for 1-D score checks."""
    a = float(schedule.alpha[t])
    sig = float(schedule.sigma[t])
    var = a * a * field.s * field.s + sig * sig
    return -0.5 * (x - a * field.mu) ** 2 / var - 0.5 * np.log(2 * np.pi * var)


def tilted_gaussian(mu_r: np.ndarray, mu_i: np.ndarray, s: float, w: float) -> TiltedGaussian:
    """Distribution implied by affine score mixing (1+w)s_r - w*s_i of two
    equal-variance Gaussians: mean (1+w)mu_r - w*mu_i, variance s^2."""
    if not s > 0:
        raise ValueError(f"tilted_gaussian needs s > 0, got {s}")
    mean = (1.0 + w) * np.asarray(mu_r, dtype=np.float64) - w * np.asarray(mu_i, dtype=np.float64)
    return TiltedGaussian(mean=mean.astype(np.float32), variance=float(s) ** 2)


def spatial_tilted_mean(mu_r: np.ndarray, mu_i: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Per-pixel tilted mean (1+W)mu_r - W*mu_i; W is (H,W)."""
    mu_r = np.asarray(mu_r, dtype=np.float32)
    mu_i = np.asarray(mu_i, dtype=np.float32)
    W = np.asarray(W, dtype=np.float32)
    if mu_r.shape != mu_i.shape:
        raise ValueError(f"mean fields differ: {mu_r.shape} vs {mu_i.shape}")
    if W.shape != mu_r.shape[-2:]:
        raise ValueError(f"weight matrix {W.shape} vs field {mu_r.shape}")
    Wb = W.reshape((1,) * (mu_r.ndim - 2) + W.shape)
    return (np.float32(1.0) + Wb) * mu_r - Wb * mu_i


def tilted_moments_numeric(mu_r: float, mu_i: float, s: float, w: float,
                           span: float = 12.0, n: int = 20001) -> tuple:
    """First two moments of the density ~ p_r^(1+w) * p_i^(-w), by direct
    normalization on a 1-D grid (independent of the closed form)."""
    center = (1.0 + w) * mu_r - w * mu_i
    half = span * s + abs(mu_r - mu_i) * (1 + abs(w))
    xs = np.linspace(center - half, center + half, n)
    logp = (1.0 + w) * (-0.5 * (xs - mu_r) ** 2 / s ** 2) \
        - w * (-0.5 * (xs - mu_i) ** 2 / s ** 2)
    logp -= logp.max()
    p = np.exp(logp)
    z = _trapezoid(p, xs)
    mean = _trapezoid(xs * p, xs) / z
    var = _trapezoid((xs - mean) ** 2 * p, xs) / z
    return float(mean), float(var)


class OracleModel:
    """Drop-in model pair: task selects which Gaussian field answers.

    The conditional image and mask are ignored; this is a verification
    harness for the guidance algebra, not an editor.
    """

    data_space = "raw"

    def __init__(self, field_removal: GaussianTaskField,
                 field_insertion: GaussianTaskField):
        if field_removal.mu.shape != field_insertion.mu.shape:
            raise ValueError("oracle fields must share a shape")
        if field_removal.s != field_insertion.s:
            raise ValueError("oracle fields must share the std (equal-variance design)")
        field_removal.validate()
        field_insertion.validate()
        self.removal = field_removal
        self.insertion = field_insertion
        self.image_size = field_removal.mu.shape[-1]

    def field(self, task: str) -> GaussianTaskField:
        if task == "removal":
            return self.removal
        if task == "insertion":
            return self.insertion
        raise ValueError(f"unknown task {task!r}")

    def predict(self, x: np.ndarray, t, x_cond, m, task: str, schedule=None) -> np.ndarray:
        raise RuntimeError("OracleModel.predict needs a schedule; use predict_with_schedule")

    def predict_with_schedule(self, x: np.ndarray, t: int, task: str,
                              schedule: NoiseSchedule) -> np.ndarray:
        return analytic_eps(self.field(task), x, t, schedule)


def default_oracle(size: int = 16, background: float = 0.25,
                   object_value: float = 0.9, s: float = 0.15) -> OracleModel:
    """Removal field: flat background. Insertion field: background plus a
    bright square, so guidance visibly erases or paints the object."""
    mu_r = np.full((3, size, size), background, dtype=np.float32)
    mu_i = mu_r.copy()
    q = size // 4
    mu_i[:, q:size - q, q:size - q] = object_value
    return OracleModel(GaussianTaskField(mu_r, s), GaussianTaskField(mu_i, s))
