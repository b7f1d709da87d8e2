"""Image quality metrics and the analytic shadow detector."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .scenes import LUMINANCE_DROP_TAU, CounterfactualTriplet, luminance

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 8
# Shadow-detected flag threshold: fraction of the image area, in percent.
SHADOW_DETECT_AREA_PCT = 0.05


def psnr(a: np.ndarray, b: np.ndarray, region: np.ndarray | None = None) -> float:
    """-10 log10 MSE with peak 1.0, capped at 99 dB; optionally restricted
    to a pixel region (H,W bool)."""
    if a.shape != b.shape:
        raise ValueError(f"psnr: shapes differ: {a.shape} vs {b.shape}")
    d = (a.astype(np.float64) - b.astype(np.float64)) ** 2
    if region is not None:
        if region.shape != a.shape[-2:]:
            raise ValueError(f"psnr: region {region.shape} vs image {a.shape}")
        if not region.any():
            raise ValueError("psnr: empty region")
        d = d[..., region]
    mse = float(d.mean())
    if mse <= 0.0:
        return PSNR_CAP_DB
    return float(min(-10.0 * np.log10(mse), PSNR_CAP_DB))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM over sliding 8x8 windows of the grayscale images."""
    if a.shape != b.shape:
        raise ValueError(f"ssim: shapes differ: {a.shape} vs {b.shape}")
    ga = luminance(a) if a.ndim == 3 else a.astype(np.float32)
    gb = luminance(b) if b.ndim == 3 else b.astype(np.float32)
    h, w = ga.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"ssim: image {ga.shape} smaller than the "
                         f"{SSIM_WINDOW}x{SSIM_WINDOW} window")
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2

    def win_mean(x):
        v = sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
        return v.mean(axis=(2, 3), dtype=np.float64)

    mu_a = win_mean(ga)
    mu_b = win_mean(gb)
    va = win_mean(ga * ga) - mu_a * mu_a
    vb = win_mean(gb * gb) - mu_b * mu_b
    cov = win_mean(ga * gb) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)
    return float((num / den).mean())


def dilate_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation with a square structuring element of the given radius."""
    if radius <= 0:
        return mask.copy()
    win = 2 * radius + 1
    padded = np.pad(mask, radius)
    return sliding_window_view(padded, (win, win)).any(axis=(2, 3))


def scaled_dilation_radius(image_size: int, base_px: int = 10,
                           base_size: int = 512) -> int:
    """Evaluation-protocol dilation, stated at full resolution and scaled
    proportionally to the working image size (never below 1 px)."""
    return max(1, int(round(base_px * image_size / base_size)))


def detect_shadow(output: np.ndarray, background: np.ndarray,
                  object_mask: np.ndarray,
                  tau: float = LUMINANCE_DROP_TAU) -> np.ndarray:
    """Pixels outside the object mask whose luminance dropped by more than
    tau relative to the clean background."""
    drop = luminance(background) - luminance(output)
    return (drop > tau) & ~object_mask


def shadow_metrics(output: np.ndarray, trip: CounterfactualTriplet,
                   tau: float = LUMINANCE_DROP_TAU,
                   detect_pct: float = SHADOW_DETECT_AREA_PCT) -> dict:
    """Shadow area ratio (%), IoU against ground truth, detected flag."""
    if output.shape != trip.background.shape:
        raise ValueError(f"shadow_metrics: output {output.shape} vs "
                         f"triplet {trip.background.shape}")
    pred = detect_shadow(output, trip.background, trip.mask, tau)
    area_ratio = 100.0 * float(pred.mean())
    union = pred | trip.shadow_gt
    inter = pred & trip.shadow_gt
    iou = 1.0 if not union.any() else float(inter.sum() / union.sum())
    return {"area_ratio": area_ratio, "iou": iou,
            "detected": bool(area_ratio > detect_pct)}
