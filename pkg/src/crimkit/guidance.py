"""Cross-task guidance: scalar forms, the spatial weight matrix, and the
matrix-scaled combination.

All three guided combinations evaluate the same kernel
``(1 + W) * eps_pos - W * eps_neg`` in float32, so the scalar forms and a
uniform weight matrix produce bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MODES = ("none", "ctg-removal", "ctg-insertion", "sctg")


class GuidanceError(ValueError):
    pass


def _combine(eps_pos: np.ndarray, eps_neg: np.ndarray, w) -> np.ndarray:
    if eps_pos.shape != eps_neg.shape:
        raise GuidanceError(f"guidance: shapes differ: {eps_pos.shape} vs {eps_neg.shape}")
    one = np.float32(1.0)
    return (one + w) * eps_pos - w * eps_neg


def ctg_removal(eps_r: np.ndarray, eps_i: np.ndarray, w: float) -> np.ndarray:
    """(1+w) * eps_removal - w * eps_insertion; the opposite task acts as
    negative guidance."""
    if w < 0:
        raise GuidanceError(f"ctg scale must be >= 0, got {w}")
    return _combine(eps_r, eps_i, np.float32(w))


def ctg_insertion(eps_i: np.ndarray, eps_r: np.ndarray, w: float) -> np.ndarray:
    """(1+w) * eps_insertion - w * eps_removal."""
    if w < 0:
        raise GuidanceError(f"ctg scale must be >= 0, got {w}")
    return _combine(eps_i, eps_r, np.float32(w))


def sctg(eps_r: np.ndarray, eps_i: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Per-pixel guided combination (1+W) * eps_r - W * eps_i.

    W is (H,W) and broadcasts over channel (and batch) axes. A pixel with
    W_ij = -(1+w) reproduces insertion CTG at scale w.
    """
    W = np.asarray(W, dtype=np.float32)
    if W.shape != eps_r.shape[-2:]:
        raise GuidanceError(f"weight matrix {W.shape} vs field {eps_r.shape}")
    Wb = W.reshape((1,) * (eps_r.ndim - 2) + W.shape)
    return _combine(eps_r, eps_i, Wb)


@dataclass
class SpatialGuidance:
    """Region weights for one denoising run.

    w_r applies on the removal region, w_i on the insertion region, and the
    gray area flips from w_r to w_i as t crosses the switching step t_s.
    """

    w_r: float
    w_i: float
    t_s: int
    p_r: np.ndarray  # (H,W) bool
    p_i: np.ndarray
    tie: str = "removal"          # weight at exactly t == t_s
    overlap: str = "insertion"    # winner on P_r & P_i

    def validate(self):
        if not self.w_r > 0:
            raise GuidanceError(f"spatial guidance needs w_r > 0, got {self.w_r}")
        if not self.w_i < -1:
            raise GuidanceError(f"spatial guidance needs w_i < -1, got {self.w_i}")
        if self.p_r.shape != self.p_i.shape:
            raise GuidanceError(f"region shapes differ: {self.p_r.shape} vs {self.p_i.shape}")
        if not (self.p_r.any() or self.p_i.any()):
            raise GuidanceError("spatial guidance with both regions empty")
        if self.tie not in ("removal", "insertion"):
            raise GuidanceError(f"bad tie rule {self.tie!r}")
        if self.overlap not in ("removal", "insertion"):
            raise GuidanceError(f"bad overlap rule {self.overlap!r}")


def build_weight_matrix(spatial: SpatialGuidance, t: int, size: tuple) -> np.ndarray:
    """Materialize W for the current timestep.

    Membership in P_r / P_i pins a pixel's weight; the gray area takes w_r
    while t > t_s and w_i once t < t_s (the tie at t == t_s follows the
    configured rule, removal by default).
    """
    spatial.validate()
    if spatial.p_r.shape != tuple(size):
        raise GuidanceError(f"regions {spatial.p_r.shape} vs requested size {tuple(size)}")
    w_r = np.float32(spatial.w_r)
    w_i = np.float32(spatial.w_i)
    if t > spatial.t_s:
        gray = w_r
    elif t < spatial.t_s:
        gray = w_i
    else:
        gray = w_r if spatial.tie == "removal" else w_i
    W = np.full(tuple(size), gray, dtype=np.float32)
    if spatial.overlap == "insertion":
        W[spatial.p_r] = w_r
        W[spatial.p_i] = w_i
    else:
        W[spatial.p_i] = w_i
        W[spatial.p_r] = w_r
    return W


@dataclass
class GuidanceConfig:
    """Guidance selection for a sampling run.

    Scalar modes use ``w``; sctg uses (w_r, w_i, t_s_frac) with the pixel
    sets supplied by the edit request. ``t_window`` restricts guidance to a
    timestep range (full range by default).
    """

    mode: str = "none"
    w: float = 1.5
    w_r: float = 1.5
    w_i: float = -2.5
    t_s_frac: float = 0.6
    t_window: tuple = field(default=None)
    tie: str = "removal"
    overlap: str = "insertion"

    def validate(self):
        if self.mode not in MODES:
            raise GuidanceError(f"unknown guidance mode {self.mode!r}")
        if self.mode in ("ctg-removal", "ctg-insertion") and self.w < 0:
            raise GuidanceError(f"ctg scale must be >= 0, got {self.w}")
        if self.mode == "sctg":
            if not self.w_r > 0:
                raise GuidanceError(f"sctg needs w_r > 0, got {self.w_r}")
            if not self.w_i < -1:
                raise GuidanceError(f"sctg needs w_i < -1, got {self.w_i}")
            if not 0.0 <= self.t_s_frac <= 1.0:
                raise GuidanceError(f"t_s_frac must be in [0,1], got {self.t_s_frac}")

    def active_at(self, t: int) -> bool:
        if self.mode == "none":
            return False
        if self.t_window is None:
            return True
        lo, hi = self.t_window
        return lo <= t <= hi

    def to_json_dict(self) -> dict:
        return {"mode": self.mode, "w": self.w,
                "spatial": {"w_r": self.w_r, "w_i": self.w_i,
                            "t_s_frac": self.t_s_frac}}

    @classmethod
    def from_json_dict(cls, d: dict) -> "GuidanceConfig":
        from .configs import validate_config
        validate_config(d, "guidance")
        spatial = d.get("spatial") or {}
        cfg = cls(mode=d.get("mode", "none"), w=float(d.get("w", 1.5)),
                  w_r=float(spatial.get("w_r", 1.5)),
                  w_i=float(spatial.get("w_i", -2.5)),
                  t_s_frac=float(spatial.get("t_s_frac", 0.6)))
        cfg.validate()
        return cfg
