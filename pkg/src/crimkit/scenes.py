"""Procedural counterfactual scenes: paired with/without-object images,
object-tight masks, and analytic shadow / reflection ground truth.

Shadows are the object silhouette translated along the light direction,
Gaussian-blurred, multiplied into the background, and *cut off* where the
luminance drop would not exceed ``LUMINANCE_DROP_TAU``. The cutoff makes the
ground-truth effect masks exactly the set of changed pixels, so a
threshold-based shadow detector agrees with the generator by construction.

The light direction always points against the background gradient (shadows
fall toward the dark side), so the effect direction is inferable from the
background alone - a conditional model can learn to synthesize effects for
an object pasted without any.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Luminance-drop threshold shared by the shadow renderer and the detector.
LUMINANCE_DROP_TAU = 0.04
LUMA = np.asarray([0.299, 0.587, 0.114], dtype=np.float32)

OBJECT_MARGIN_PX = 2


class SceneSpecError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Specs


@dataclass
class BackgroundSpec:
    base: tuple          # RGB in [0,1]
    direction: tuple     # unit gradient direction (dy, dx)
    amplitude: float


@dataclass
class ObjectSpec:
    kind: str            # "ellipse" | "rounded-rect"
    center: tuple        # (y, x), pixels
    half_extents: tuple  # (ry, rx), pixels
    color: tuple


@dataclass
class LightSpec:
    direction: tuple     # unit vector (dy, dx), points from light toward shadow
    offset_len: float
    alpha_s: float       # multiplicative shadow darkening in (0,1)
    blur_sigma: float


@dataclass
class ReflectionSpec:
    enabled: bool
    attenuation: float


@dataclass
class SceneSpec:
    seed: int
    size: int
    background: BackgroundSpec
    object: ObjectSpec
    light: LightSpec
    reflection: ReflectionSpec

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            seed=int(d["seed"]),
            size=int(d["size"]),
            background=BackgroundSpec(**{k: tuple(v) if isinstance(v, list) else v
                                         for k, v in d["background"].items()}),
            object=ObjectSpec(**{k: tuple(v) if isinstance(v, list) else v
                                 for k, v in d["object"].items()}),
            light=LightSpec(**d["light"]),
            reflection=ReflectionSpec(**d["reflection"]),
        )


@dataclass
class CounterfactualTriplet:
    background: np.ndarray     # I_b, (3,H,W) float32 in [0,1]
    with_object: np.ndarray    # I_o
    mask: np.ndarray           # object-tight binary mask, (H,W) bool
    shadow_gt: np.ndarray      # (H,W) bool
    reflection_gt: np.ndarray  # (H,W) bool
    spec: SceneSpec | None = None


@dataclass
class LightAdjustSpec:
    m_L: np.ndarray  # (H,W) float32 in [0,1]
    alpha: float

    def validate(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ValueError(f"light alpha must be finite and > 0, got {self.alpha}")
        if self.m_L.min() < 0 or self.m_L.max() > 1:
            raise ValueError("m_L values must lie in [0,1]")


@dataclass
class DegradeSpec:
    kind: str                      # "correlated-color-transform" | "intensity-scaling"
    matrix: np.ndarray | None = None  # 3x3, row sums near 1
    scale: float | None = None        # in [0.6, 1.4]


@dataclass
class GeneratorConfig:
    """Sampling ranges for procedural scenes and training augmentation."""

    image_size: int = 32
    base_color_range: tuple = (0.45, 0.85)
    gradient_amplitude_range: tuple = (0.08, 0.18)
    half_extent_frac_range: tuple = (0.09, 0.185)
    shadow_offset_frac_range: tuple = (0.13, 0.24)
    shadow_alpha_range: tuple = (0.35, 0.6)
    shadow_blur_sigma_range: tuple = (0.0, 1.2)
    reflection_prob: float = 0.35
    reflection_attenuation_range: tuple = (0.25, 0.5)
    # insertion-task augmentation
    light_alpha_range: tuple = (0.5, 1.3)
    soft_mask_blur_sigma_range: tuple = (2.0, 6.0)
    degrade_offdiag_max: float = 0.25
    degrade_scale_range: tuple = (0.6, 1.4)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# Helpers


def luminance(img: np.ndarray) -> np.ndarray:
    """(3,H,W) -> (H,W) luma."""
    return np.tensordot(LUMA, img, axes=([0], [0]))


def gaussian_blur(field: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a (H,W) field; sigma <= 0 is the identity."""
    if sigma <= 0:
        return field.astype(np.float32, copy=True)
    r = max(1, int(math.ceil(3 * sigma)))
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(xs ** 2) / (2 * sigma * sigma))
    k = (k / k.sum()).astype(np.float32)
    out = field.astype(np.float32)
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (r, r)
        padded = np.pad(out, pad)
        win = sliding_window_view(padded, 2 * r + 1, axis=axis)
        out = win @ k
    return out


def translate_mask(mask: np.ndarray, offset: tuple) -> np.ndarray:
    """Shift a (H,W) array by integer (dy,dx), zero-filling exposed pixels."""
    dy, dx = int(offset[0]), int(offset[1])
    h, w = mask.shape
    out = np.zeros_like(mask)
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    ys_src = slice(max(-dy, 0), min(h - dy, h))
    xs_src = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def _object_silhouette(obj: ObjectSpec, size: int) -> np.ndarray:
    cy, cx = obj.center
    ry, rx = obj.half_extents
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    if obj.kind == "ellipse":
        return ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0
    if obj.kind == "rounded-rect":
        r = 0.35 * min(ry, rx)
        dy = np.maximum(np.abs(ys - cy) - (ry - r), 0.0)
        dx = np.maximum(np.abs(xs - cx) - (rx - r), 0.0)
        return dy * dy + dx * dx <= r * r
    raise SceneSpecError(f"unknown object kind {obj.kind!r}")


def validate_scene_spec(spec: SceneSpec) -> None:
    s = spec.size
    cy, cx = spec.object.center
    ry, rx = spec.object.half_extents
    m = OBJECT_MARGIN_PX
    if not (cy - ry >= m and cy + ry <= s - 1 - m and cx - rx >= m and cx + rx <= s - 1 - m):
        raise SceneSpecError(
            f"object (center {spec.object.center}, half extents {spec.object.half_extents}) "
            f"violates the {m}-pixel margin in a {s}x{s} image")
    if spec.light.offset_len > s / 4:
        raise SceneSpecError(f"shadow offset {spec.light.offset_len} exceeds size/4 = {s / 4}")
    if not (0 < spec.light.alpha_s < 1):
        raise SceneSpecError(f"shadow darkening must be in (0,1), got {spec.light.alpha_s}")


# ---------------------------------------------------------------------------
# Scene sampling and rendering


def sample_scene_spec(seed: int, config: GeneratorConfig | None = None) -> SceneSpec:
    cfg = config or GeneratorConfig()
    s = cfg.image_size
    rng = np.random.default_rng(np.random.SeedSequence([0x5CE7E, seed]))

    base = rng.uniform(*cfg.base_color_range, size=3)
    theta = rng.uniform(0, 2 * math.pi)
    gdir = (math.sin(theta), math.cos(theta))
    amp = rng.uniform(*cfg.gradient_amplitude_range)

    kind = "ellipse" if rng.random() < 0.5 else "rounded-rect"
    ry = rng.uniform(*cfg.half_extent_frac_range) * s
    rx = rng.uniform(*cfg.half_extent_frac_range) * s
    m = OBJECT_MARGIN_PX
    cy = rng.uniform(m + ry, s - 1 - m - ry)
    cx = rng.uniform(m + rx, s - 1 - m - rx)

    color = rng.uniform(0, 1, size=3)
    for _ in range(8):
        if np.max(np.abs(color - base)) >= 0.25:
            break
        color = rng.uniform(0, 1, size=3)
    else:
        color = 1.0 - base

    # Shadows fall toward the dark side of the gradient.
    ldir = (-gdir[0], -gdir[1])
    offset_len = rng.uniform(*cfg.shadow_offset_frac_range) * s
    alpha_s = rng.uniform(*cfg.shadow_alpha_range)
    blur = rng.uniform(*cfg.shadow_blur_sigma_range)

    refl = rng.random() < cfg.reflection_prob
    att = rng.uniform(*cfg.reflection_attenuation_range)

    return SceneSpec(
        seed=seed, size=s,
        background=BackgroundSpec(tuple(float(v) for v in base), gdir, float(amp)),
        object=ObjectSpec(kind, (float(cy), float(cx)), (float(ry), float(rx)),
                          tuple(float(v) for v in color)),
        light=LightSpec(ldir, float(offset_len), float(alpha_s), float(blur)),
        reflection=ReflectionSpec(bool(refl), float(att)),
    )


def render_background(spec: SceneSpec) -> np.ndarray:
    s = spec.size
    ys, xs = np.mgrid[0:s, 0:s].astype(np.float32)
    c = (s - 1) / 2.0
    dy, dx = spec.background.direction
    ramp = ((ys - c) * dy + (xs - c) * dx) / (s / 2.0)
    base = np.asarray(spec.background.base, dtype=np.float32)
    img = base[:, None, None] + np.float32(spec.background.amplitude) * ramp[None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def generate_triplet(spec: SceneSpec) -> CounterfactualTriplet:
    """Render (I_b, I_o, m) plus exact shadow / reflection ground truth."""
    validate_scene_spec(spec)
    s = spec.size
    bg = render_background(spec)
    sil = _object_silhouette(spec.object, s)

    # Shadow field: translated silhouette, blurred, cut where the luminance
    # drop would be imperceptible to the detector.
    off = (int(round(spec.light.direction[0] * spec.light.offset_len)),
           int(round(spec.light.direction[1] * spec.light.offset_len)))
    sfield = gaussian_blur(translate_mask(sil.astype(np.float32), off), spec.light.blur_sigma)
    lum_b = luminance(bg)
    drop = lum_b * np.float32(1.0 - spec.light.alpha_s) * sfield
    sfield = np.where(drop > LUMINANCE_DROP_TAU, sfield, 0.0).astype(np.float32)
    shadow = sfield > 0

    img = bg.copy()
    img[:, shadow] = img[:, shadow] * (1.0 - np.float32(1.0 - spec.light.alpha_s) * sfield[shadow])

    # Reflection: vertical mirror of the object just below its base row,
    # alpha-blended; cut where the color change would be imperceptible.
    refl = np.zeros((s, s), dtype=bool)
    if spec.reflection.enabled and sil.any():
        base_row = int(np.max(np.nonzero(sil.any(axis=1))[0]))
        rows, cols = np.nonzero(sil)
        mrows = 2 * base_row + 1 - rows
        keep = mrows < s
        refl[mrows[keep], cols[keep]] = True
        color = np.asarray(spec.object.color, dtype=np.float32)
        att = np.float32(spec.reflection.attenuation)
        diff = np.max(np.abs(color[:, None] - img[:, refl]), axis=0)
        sub = np.zeros_like(refl)
        sub[refl] = att * diff > LUMINANCE_DROP_TAU
        refl = sub
        img[:, refl] = (1.0 - att) * img[:, refl] + att * color[:, None]

    color = np.asarray(spec.object.color, dtype=np.float32)
    img[:, sil] = color[:, None]

    return CounterfactualTriplet(
        background=bg,
        with_object=img.astype(np.float32),
        mask=sil,
        shadow_gt=shadow & ~sil,
        reflection_gt=refl & ~sil,
        spec=spec,
    )


# ---------------------------------------------------------------------------
# Data-construction operators for training samples


def light_adjust(img: np.ndarray, spec: LightAdjustSpec) -> np.ndarray:
    """Blend a scaled copy of the image under a soft mask.

    Computed as I + m_L * (alpha - 1) * I so alpha = 1 is an exact identity;
    the result is clamped to [0,1].
    """
    spec.validate()
    if img.shape[-2:] != spec.m_L.shape:
        raise ValueError(f"light_adjust: image {img.shape} vs mask {spec.m_L.shape}")
    out = img + spec.m_L[None] * np.float32(spec.alpha - 1.0) * img
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def random_soft_mask(seed: int, size: int,
                     blur_range: tuple = (2.0, 6.0)) -> np.ndarray:
    """Union of 1-3 random convex blobs with Gaussian blur, values in [0,1]."""
    rng = np.random.default_rng(np.random.SeedSequence([0x50F7, seed]))
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    blob = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(0, size - 1, size=2)
        ry = rng.uniform(0.1, 0.35) * size
        rx = rng.uniform(0.1, 0.35) * size
        blob |= ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0
    sigma = rng.uniform(*blur_range)
    out = gaussian_blur(blob.astype(np.float32), sigma)
    return np.clip(out, 0.0, 1.0)


def random_light_adjust(seed: int, size: int,
                        config: GeneratorConfig | None = None) -> LightAdjustSpec:
    cfg = config or GeneratorConfig()
    rng = np.random.default_rng(np.random.SeedSequence([0x11A7, seed]))
    alpha = float(rng.uniform(*cfg.light_alpha_range))
    return LightAdjustSpec(
        m_L=random_soft_mask(seed, size, cfg.soft_mask_blur_sigma_range),
        alpha=alpha)


def degrade(img: np.ndarray, spec: DegradeSpec) -> np.ndarray:
    """Color-mix or intensity-scale an image in [0,1]; result clamped."""
    if spec.kind == "correlated-color-transform":
        m = np.asarray(spec.matrix, dtype=np.float32)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError(f"degrade: need a finite 3x3 matrix, got {spec.matrix}")
        out = np.tensordot(m, img, axes=([1], [0]))
    elif spec.kind == "intensity-scaling":
        if spec.scale is None or not np.isfinite(spec.scale):
            raise ValueError("degrade: intensity scaling needs a finite scale")
        out = img * np.float32(spec.scale)
    else:
        raise ValueError(f"degrade: unknown kind {spec.kind!r}")
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def random_degrade_spec(seed: int, config: GeneratorConfig | None = None) -> DegradeSpec:
    cfg = config or GeneratorConfig()
    rng = np.random.default_rng(np.random.SeedSequence([0xDE64, seed]))
    if rng.random() < 0.5:
        pert = rng.uniform(-cfg.degrade_offdiag_max, cfg.degrade_offdiag_max, size=(3, 3))
        np.fill_diagonal(pert, 0.0)
        m = np.eye(3) + pert
        m /= m.sum(axis=1, keepdims=True)  # keep row sums at 1
        return DegradeSpec(kind="correlated-color-transform", matrix=m.astype(np.float32))
    return DegradeSpec(kind="intensity-scaling",
                       scale=float(rng.uniform(*cfg.degrade_scale_range)))


def build_removal_sample(trip: CounterfactualTriplet):
    """Removal supervision: condition on I_o, reconstruct I_b."""
    return trip.with_object, trip.background, trip.mask


def build_insertion_sample(trip: CounterfactualTriplet, degrade_spec: DegradeSpec,
                           light_spec: LightAdjustSpec):
    """Insertion supervision: degraded paste on an adjusted background."""
    m = trip.mask.astype(np.float32)[None]
    x_i = m * degrade(trip.with_object, degrade_spec) \
        + (1.0 - m) * light_adjust(trip.background, light_spec)
    i_gt = light_adjust(trip.with_object, light_spec)
    return x_i.astype(np.float32), i_gt, trip.mask


def build_movement_input(trip: CounterfactualTriplet, offset: tuple):
    """Movement input: object pixels copied onto the destination region.

    Returns (x_I, m, P_r, P_i) with m = P_r | P_i. Source-side effects are
    left untouched; erasing them is the removal guidance's job.
    """
    dy, dx = int(offset[0]), int(offset[1])
    if dy == 0 and dx == 0:
        raise ValueError("movement offset (0,0) is degenerate")
    p_r = trip.mask
    h, w = p_r.shape
    rows, cols = np.nonzero(p_r)
    if (rows + dy).min() < 0 or (rows + dy).max() >= h \
            or (cols + dx).min() < 0 or (cols + dx).max() >= w:
        raise ValueError(f"movement offset ({dy},{dx}) pushes the object out of bounds")
    p_i = translate_mask(p_r, (dy, dx))
    x_i = trip.with_object.copy()
    x_i[:, rows + dy, cols + dx] = trip.with_object[:, rows, cols]
    return x_i, p_r | p_i, p_r, p_i


def move_scene_spec(spec: SceneSpec, offset: tuple) -> SceneSpec:
    """The spec with the object displaced; rendering it gives the moved-scene
    ground truth (shadow and reflection follow the object)."""
    d = spec.to_dict()
    d["object"]["center"] = (spec.object.center[0] + offset[0],
                             spec.object.center[1] + offset[1])
    return SceneSpec.from_dict(d)


# ---------------------------------------------------------------------------
# Triplet directory format


def _to_png_array(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        return np.clip(np.rint(img * 255), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    return (img.astype(np.uint8) * 255)


def save_png(path, img: np.ndarray) -> None:
    from PIL import Image
    Image.fromarray(_to_png_array(img)).save(path)


def load_png(path) -> np.ndarray:
    from PIL import Image
    arr = np.asarray(Image.open(path))
    if arr.ndim == 2:
        return arr >= 128
    return (arr.astype(np.float32) / 255.0).transpose(2, 0, 1)


def save_triplet(root, trip_id: str, trip: CounterfactualTriplet) -> None:
    d = Path(root) / trip_id
    d.mkdir(parents=True, exist_ok=True)
    save_png(d / "background.png", trip.background)
    save_png(d / "object.png", trip.with_object)
    save_png(d / "mask.png", trip.mask)
    save_png(d / "shadow.png", trip.shadow_gt)
    save_png(d / "reflection.png", trip.reflection_gt)
    if trip.spec is not None:
        (d / "spec.json").write_text(json.dumps(trip.spec.to_dict(), indent=1))


def load_triplet(root, trip_id: str) -> CounterfactualTriplet:
    d = Path(root) / trip_id
    spec = None
    spec_file = d / "spec.json"
    if spec_file.exists():
        spec = SceneSpec.from_dict(json.loads(spec_file.read_text()))
    return CounterfactualTriplet(
        background=load_png(d / "background.png"),
        with_object=load_png(d / "object.png"),
        mask=load_png(d / "mask.png"),
        shadow_gt=load_png(d / "shadow.png"),
        reflection_gt=load_png(d / "reflection.png"),
        spec=spec,
    )


def generate_corpus(root, count: int, config: GeneratorConfig | None = None,
                    seed_start: int = 0) -> list:
    """Write `count` triplets under `root` plus an index.json manifest."""
    cfg = config or GeneratorConfig()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(count):
        seed = seed_start + i
        trip = generate_triplet(sample_scene_spec(seed, cfg))
        tid = f"{seed:06d}"
        save_triplet(root, tid, trip)
        ids.append(tid)
    manifest = {"ids": ids, "config": cfg.to_dict(), "count": count,
                "seed_start": seed_start}
    (root / "index.json").write_text(json.dumps(manifest, indent=1))
    return ids


def load_corpus(root) -> tuple:
    root = Path(root)
    manifest_path = root / "index.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no triplet manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    trips = [load_triplet(root, tid) for tid in manifest["ids"]]
    return trips, manifest
