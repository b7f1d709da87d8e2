"""Scene generator: triplet invariants, operator formulas, regression bands."""

import numpy as np
import pytest

from crimkit import scenes as sc


def make_triplet(seed=0, size=32, **cfg_overrides):
    cfg = sc.GeneratorConfig(image_size=size, **cfg_overrides)
    return sc.generate_triplet(sc.sample_scene_spec(seed, cfg))


# ---------------------------------------------------------------------------
# generate_triplet


def test_triplet_background_equality_invariant():
    for seed in range(25):
        t = make_triplet(seed)
        changed = t.mask | t.shadow_gt | t.reflection_gt
        assert np.array_equal(t.background[:, ~changed], t.with_object[:, ~changed]), seed


def test_mask_disjoint_from_shadow_gt():
    for seed in range(25):
        t = make_triplet(seed)
        assert not np.any(t.mask & t.shadow_gt), seed
        assert not np.any(t.mask & t.reflection_gt), seed


def test_blur_zero_shadow_is_translated_silhouette():
    spec = sc.SceneSpec(
        seed=0, size=32,
        background=sc.BackgroundSpec((0.7, 0.7, 0.7), (0.0, 1.0), 0.1),
        object=sc.ObjectSpec("ellipse", (14.0, 13.0), (4.0, 4.0), (0.1, 0.2, 0.9)),
        light=sc.LightSpec((0.0, 1.0), 5.0, 0.5, 0.0),
        reflection=sc.ReflectionSpec(False, 0.3),
    )
    t = sc.generate_triplet(spec)
    expected = sc.translate_mask(t.mask, (0, 5)) & ~t.mask
    assert np.array_equal(t.shadow_gt, expected)


def test_same_seed_bit_identical():
    a, b = make_triplet(7), make_triplet(7)
    assert np.array_equal(a.background, b.background)
    assert np.array_equal(a.with_object, b.with_object)
    assert np.array_equal(a.mask, b.mask)
    assert np.array_equal(a.shadow_gt, b.shadow_gt)
    assert np.array_equal(a.reflection_gt, b.reflection_gt)


def test_margin_violation_rejected():
    spec = sc.sample_scene_spec(0)
    spec.object.center = (1.0, 16.0)  # breaks the 2-pixel margin
    with pytest.raises(sc.SceneSpecError):
        sc.generate_triplet(spec)


def test_mask_coverage_regression_band():
    # Counting oracle over 1,000 rendered masks; the frozen band brackets the
    # mean object coverage fraction of the default config.
    fractions = [make_triplet(seed).mask.mean() for seed in range(1000)]
    mean = float(np.mean(fractions))
    assert 0.045 <= mean <= 0.085, mean


# ---------------------------------------------------------------------------
# light_adjust


def test_light_adjust_alpha_one_is_identity():
    img = make_triplet(1).background
    m = sc.random_soft_mask(0, 32)
    out = sc.light_adjust(img, sc.LightAdjustSpec(m_L=m, alpha=1.0))
    assert np.array_equal(out, img)


def test_light_adjust_uniform_halving():
    img = np.full((3, 8, 8), 0.8, dtype=np.float32)
    out = sc.light_adjust(img, sc.LightAdjustSpec(m_L=np.ones((8, 8), np.float32), alpha=0.5))
    assert np.allclose(out, 0.4, atol=1e-7)


def test_light_adjust_darkens_exactly_on_support():
    img = make_triplet(2).background
    m = sc.random_soft_mask(3, 32)
    out = sc.light_adjust(img, sc.LightAdjustSpec(m_L=m, alpha=0.6))
    support = m > 0
    lit = (img > 0).all(axis=0)
    assert np.all(out[:, support & lit] < img[:, support & lit] + 1e-7)
    assert np.array_equal(out[:, ~support], img[:, ~support])


def test_light_adjust_size_mismatch_rejected():
    with pytest.raises(ValueError):
        sc.light_adjust(np.zeros((3, 8, 8), np.float32),
                        sc.LightAdjustSpec(m_L=np.zeros((4, 4), np.float32), alpha=0.5))


def test_light_adjust_bad_alpha_rejected():
    m = np.zeros((8, 8), np.float32)
    for alpha in (0.0, -1.0, float("nan"), float("inf")):
        with pytest.raises(ValueError):
            sc.light_adjust(np.zeros((3, 8, 8), np.float32),
                            sc.LightAdjustSpec(m_L=m, alpha=alpha))


# ---------------------------------------------------------------------------
# random_soft_mask


def test_soft_mask_range_and_determinism():
    a = sc.random_soft_mask(5, 32)
    b = sc.random_soft_mask(5, 32)
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert a.shape == (32, 32)


def test_soft_mask_support_band():
    # Counting oracle over 1,000 seeds: mean fraction of pixels with any
    # light-adjust influence.
    fracs = [(sc.random_soft_mask(seed, 32) > 0.01).mean() for seed in range(1000)]
    mean = float(np.mean(fracs))
    assert 0.25 <= mean <= 0.75, mean


# ---------------------------------------------------------------------------
# degrade


def test_degrade_identity_matrix_and_unit_scale():
    img = make_triplet(3).with_object
    out = sc.degrade(img, sc.DegradeSpec("correlated-color-transform", matrix=np.eye(3)))
    assert np.array_equal(out, img)
    out = sc.degrade(img, sc.DegradeSpec("intensity-scaling", scale=1.0))
    assert np.array_equal(out, img)


def test_degrade_half_scale():
    img = np.full((3, 4, 4), 0.8, dtype=np.float32)
    out = sc.degrade(img, sc.DegradeSpec("intensity-scaling", scale=0.5))
    assert np.allclose(out, 0.4, atol=1e-7)


def test_degrade_golden_checksum():
    rng = np.random.default_rng(42)
    img = rng.random((3, 16, 16), dtype=np.float32)
    spec = sc.random_degrade_spec(42)
    out = sc.degrade(img, spec)
    # Frozen from a direct evaluation of this fixed (seed, image) pair.
    assert spec.kind == "intensity-scaling"
    assert np.isclose(float(out.sum()), 409.522216796875, atol=1e-3)


def test_degrade_nonfinite_matrix_rejected():
    img = np.zeros((3, 4, 4), np.float32)
    bad = np.eye(3)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        sc.degrade(img, sc.DegradeSpec("correlated-color-transform", matrix=bad))


# ---------------------------------------------------------------------------
# sample builders


def test_removal_sample_is_exact_triplet():
    t = make_triplet(4)
    x_i, i_gt, m = sc.build_removal_sample(t)
    assert x_i is t.with_object
    assert i_gt is t.background
    assert np.array_equal(m, t.mask)


def test_insertion_sample_identity_operators_collapse():
    t = make_triplet(5)
    deg = sc.DegradeSpec("intensity-scaling", scale=1.0)
    light = sc.LightAdjustSpec(m_L=sc.random_soft_mask(1, 32), alpha=1.0)
    x_i, i_gt, m = sc.build_insertion_sample(t, deg, light)
    mf = t.mask
    assert np.array_equal(x_i[:, mf], t.with_object[:, mf])
    assert np.array_equal(x_i[:, ~mf], t.background[:, ~mf])
    assert np.array_equal(i_gt, t.with_object)


def test_insertion_sample_degraded_inside_mask():
    t = make_triplet(6)
    deg = sc.random_degrade_spec(7)
    light = sc.random_light_adjust(8, 32)
    x_i, i_gt, m = sc.build_insertion_sample(t, deg, light)
    assert np.array_equal(x_i[:, t.mask], sc.degrade(t.with_object, deg)[:, t.mask])


def test_insertion_gt_darkens_on_light_support():
    # Pixel-diff oracle: the target equals the shadowing operation applied
    # directly to the object image.
    t = make_triplet(9)
    light = sc.LightAdjustSpec(m_L=sc.random_soft_mask(2, 32), alpha=0.5)
    _, i_gt, _ = sc.build_insertion_sample(
        t, sc.DegradeSpec("intensity-scaling", scale=1.0), light)
    direct = sc.light_adjust(t.with_object, light)
    assert np.array_equal(i_gt, direct)
    support = light.m_L > 0
    assert np.array_equal(i_gt[:, ~support], t.with_object[:, ~support])


# ---------------------------------------------------------------------------
# movement inputs


def test_movement_mask_is_union():
    t = make_triplet(10)
    x_i, m, p_r, p_i = sc.build_movement_input(t, (0, 6))
    assert np.array_equal(m, p_r | p_i)
    assert np.array_equal(p_r, t.mask)
    assert np.array_equal(p_i, sc.translate_mask(t.mask, (0, 6)))


def test_movement_copies_object_pixels():
    t = make_triplet(11)
    off = (2, 5)
    x_i, m, p_r, p_i = sc.build_movement_input(t, off)
    rows, cols = np.nonzero(p_r)
    assert np.array_equal(x_i[:, rows + off[0], cols + off[1]],
                          t.with_object[:, rows, cols])
    assert np.array_equal(x_i[:, ~p_i], t.with_object[:, ~p_i])


def test_movement_rejects_degenerate_and_oob():
    t = make_triplet(12)
    with pytest.raises(ValueError):
        sc.build_movement_input(t, (0, 0))
    with pytest.raises(ValueError):
        sc.build_movement_input(t, (0, 1000))


# ---------------------------------------------------------------------------
# directory round trip


def test_triplet_directory_roundtrip(tmp_path):
    ids = sc.generate_corpus(tmp_path, 3, sc.GeneratorConfig(image_size=32), seed_start=5)
    trips, manifest = sc.load_corpus(tmp_path)
    assert manifest["ids"] == ids and len(trips) == 3
    orig = make_triplet(5)
    back = trips[0]
    assert np.array_equal(back.mask, orig.mask)
    assert np.array_equal(back.shadow_gt, orig.shadow_gt)
    # 8-bit quantization bounds the image error by half a step
    assert np.max(np.abs(back.background - orig.background)) <= 0.5 / 255 + 1e-6
    assert back.spec is not None and back.spec.seed == 5


def test_load_corpus_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        sc.load_corpus(tmp_path / "nowhere")
