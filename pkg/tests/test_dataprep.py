import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from dofsynth.config import load_config
from dofsynth.core import PlanarImage, RelativeDepthMap
from dofsynth.dataprep import (
    AugmentDraw,
    DepthScaling,
    TrainingSample,
    apply_augmentation,
    augment_geometric,
    draw_augmentation,
    field_radius,
    make_field_map,
    make_iso_channel,
    sample_rng,
    sample_scaling,
    scale_depth,
    synthesize_sample,
)
from dofsynth.errors import CropLargerThanImage, DegenerateRange, PatchOutOfBounds, ValidationError
from dofsynth.isp import mosaic, pack_rggb, unprocess
from dofsynth.optics import radial_slice
from dofsynth.render import convolve
from dofsynth.sensor import dequantize, quantize

# 1 / (1 + (10 - 1) * 0.5**2), frozen
QUADRATIC_HALF = 0.3076923076923077


def _rel(v, shape=(4, 4)):
    return RelativeDepthMap(np.full(shape, v))


def _cfg(**kw):
    return load_config(None, {"rng_seed": 11, "patch_size": 64, **kw}, environ={})


def _scene(h=80, w=96, seed=0):
    rng = np.random.default_rng(seed)
    rgb = PlanarImage(rng.random((3, h, w), dtype=np.float32))
    yy, xx = np.mgrid[0:h, 0:w]
    rel = RelativeDepthMap(xx / (w - 1.0))
    return rgb, rel


# -- depth scaling ---------------------------------------------------------------

def test_linear_endpoints():
    s = DepthScaling("linear", 0.1, math.inf)
    assert scale_depth(_rel(1.0), s).values[0, 0] == pytest.approx(0.1)
    assert np.isinf(scale_depth(_rel(0.0), s).values).all()


def test_quadratic_half():
    z = scale_depth(_rel(0.5), DepthScaling("quadratic", 0.1, 1.0)).values
    np.testing.assert_allclose(z, QUADRATIC_HALF, rtol=1e-12)


def test_exponential_needs_shape_or_rng():
    with pytest.raises(ValidationError):
        scale_depth(_rel(0.5), DepthScaling("exponential", 0.1, 1.0))
    z = scale_depth(_rel(0.5), DepthScaling("exponential", 0.1, 1.0), rng=np.random.default_rng(0))
    assert 0.1 < z.values[0, 0] < 1.0


def test_degenerate_range():
    with pytest.raises(DegenerateRange):
        DepthScaling("linear", 1.0, 1.0)
    with pytest.raises(DegenerateRange):
        DepthScaling("linear", 2.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["linear", "quadratic", "exponential"]),
    st.floats(0.05, 5.0),
    st.one_of(st.just(math.inf), st.floats(1.01, 100.0)),
    st.floats(1.0, 4.0),
    hnp.arrays(np.float64, 32, elements=st.floats(0.0, 1.0)),
)
def test_scaling_monotone_and_bounded(strategy, near, far_mult, shape, rel):
    far = math.inf if math.isinf(far_mult) else near * far_mult
    s = DepthScaling(strategy, near, far, shape)
    rel = np.sort(rel)
    z = scale_depth(RelativeDepthMap(rel[None]), s).values[0]
    with np.errstate(divide="ignore"):
        d = np.where(np.isinf(z), 0.0, 1.0 / z)
    assert (np.diff(d) >= -1e-12).all()
    assert (z >= near).all() and (z <= far).all()


def test_sample_scaling_full_span():
    cfg = _cfg(depth_sampling="full", scaling_strategies=["linear"])
    s = sample_scaling(cfg, np.random.default_rng(0))
    assert s.near == pytest.approx(0.1) and math.isinf(s.far)


def test_sample_scaling_records_shape():
    cfg = _cfg(scaling_strategies=["exponential"])
    s = sample_scaling(cfg, np.random.default_rng(1))
    assert 1.0 <= s.shape <= 4.0


# -- auxiliary channels ---------------------------------------------------------------

def test_field_radius_half():
    assert field_radius(3000, 2250, (4000, 3000)) == pytest.approx(0.5, abs=1e-15)


def test_field_map_center_and_corner():
    centre = make_field_map((1995, 1495), 11, (4000, 3000)).data[0]
    assert centre[5, 5] == pytest.approx(field_radius(2000, 1500, (4000, 3000)))
    assert field_radius(2000, 1500, (4000, 3000)) == 0.0
    corner = make_field_map((0, 0), 8, (4000, 3000)).data[0]
    assert corner[0, 0] == 1.0


def test_field_map_out_of_bounds():
    with pytest.raises(PatchOutOfBounds):
        make_field_map((3990, 0), 16, (4000, 3000))


def test_field_map_step_two():
    fm = make_field_map((100, 40), 8, (400, 300), step=2).data[0]
    assert fm.shape == (4, 4)
    assert fm[0, 0] == pytest.approx(field_radius(100.5, 40.5, (400, 300)), rel=1e-6)


@pytest.mark.parametrize("iso, value", [(800, 0.8), (100, 0.1), (3200, 3.2)])
def test_iso_channel(iso, value):
    ch = make_iso_channel(iso, (5, 7)).data
    assert ch.shape == (1, 5, 7)
    np.testing.assert_allclose(ch, value, rtol=1e-7)
    assert (ch == ch.flat[0]).all()


# -- augmentation ---------------------------------------------------------------

def test_identity_draw():
    rgb, rel = _scene()
    r2, d2 = apply_augmentation(AugmentDraw(), rgb, rel)
    np.testing.assert_array_equal(r2.data, rgb.data)
    np.testing.assert_array_equal(d2.values, rel.values)


def test_flip_twice_identity():
    rgb, rel = _scene()
    flip = AugmentDraw(flip_h=True)
    r2, d2 = apply_augmentation(flip, *apply_augmentation(flip, rgb, rel))
    np.testing.assert_array_equal(r2.data, rgb.data)
    np.testing.assert_array_equal(d2.values, rel.values)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_marker_stays_aligned(seed):
    h, w = 20, 30
    rgb = np.zeros((3, h, w), np.float32)
    rel = np.zeros((h, w))
    rgb[:, 3, 7] = 1.0
    rel[3, 7] = 1.0
    out_rgb, out_rel = augment_geometric(
        PlanarImage(rgb), RelativeDepthMap(rel), np.random.default_rng(seed), crop_size=None, ev_range=0.0, saturation_range=(1, 1)
    )
    np.testing.assert_array_equal(np.argwhere(out_rgb.data[0] == 1.0), np.argwhere(out_rel.values == 1.0))


def test_crop_too_large():
    with pytest.raises(CropLargerThanImage):
        draw_augmentation(np.random.default_rng(0), (10, 12), crop_size=16)


def test_exposure_and_saturation_bounded():
    rgb, rel = _scene()
    out, _ = apply_augmentation(AugmentDraw(ev=1.0, saturation=1.5), rgb, rel)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


# -- samples ---------------------------------------------------------------

def _replay_linear(rgb, rel, cfg, rng):
    """Replay the sample's random draws up to unprocessing."""
    s = cfg.patch_size
    draw = draw_augmentation(rng, (rgb.height, rgb.width), s, cfg.exposure_jitter_ev, cfg.saturation_range)
    rgb_p, rel_p = apply_augmentation(draw, rgb, rel)
    sw, sh = cfg.sensor_size
    x0 = 2 * int(rng.integers(0, (sw - s) // 2 + 1))
    y0 = 2 * int(rng.integers(0, (sh - s) // 2 + 1))
    radius = float(field_radius(x0 + (s - 1) / 2.0, y0 + (s - 1) / 2.0, cfg.sensor_size))
    sample_scaling(cfg, rng)
    return unprocess(rgb_p, cfg.isp, rng, cfg.wb_jitter, cfg.ccm_jitter), radius


QUIET = {"psf_aug_sigma_range": [0.0, 0.0], "noise": {"shot": 0.0, "read0": 0.0, "read1": 0.0}}


def test_degenerate_pipeline(identity_grid):
    rgb, rel = _scene()
    s = synthesize_sample(rgb, rel, identity_grid, _cfg(**QUIET), sample_rng(11, 0))
    np.testing.assert_array_equal(s.input[:4], s.target)


def test_sample_shapes_and_meta(small_grid):
    rgb, rel = _scene()
    s = synthesize_sample(rgb, rel, small_grid, _cfg(), sample_rng(11, 3), source_id="a", seed=11)
    assert s.input.shape == (6, 32, 32) and s.target.shape == (4, 32, 32)
    assert s.input[4].min() == s.input[4].max() == np.float32(s.meta["iso"] * 0.001)
    assert 0.0 <= s.input[5].min() <= s.input[5].max() <= 1.0
    assert set(s.meta) >= {"iso", "field_radius", "patch_origin", "depth_scaling", "psf_sigma", "source_id", "rng_seed"}
    x0, y0 = s.meta["patch_origin"]
    assert x0 % 2 == 0 and y0 % 2 == 0


def test_sample_deterministic(small_grid):
    rgb, rel = _scene()
    a = synthesize_sample(rgb, rel, small_grid, _cfg(), sample_rng(11, 5))
    b = synthesize_sample(rgb, rel, small_grid, _cfg(), sample_rng(11, 5))
    assert a.input.tobytes() == b.input.tobytes() and a.target.tobytes() == b.target.tobytes()
    assert a.meta == b.meta
    c = synthesize_sample(rgb, rel, small_grid, _cfg(), sample_rng(11, 6))
    assert a.input.tobytes() != c.input.tobytes()


def test_single_stop_matches_convolution_path(small_grid):
    # rel = 1 with the full depth span puts every pixel at z_min, the first stop
    h, w = 80, 96
    rgb = PlanarImage(np.random.default_rng(2).random((3, h, w), dtype=np.float32))
    rel = RelativeDepthMap(np.ones((h, w)))
    cfg = _cfg(depth_sampling="full", **QUIET)
    sample = synthesize_sample(rgb, rel, small_grid, cfg, sample_rng(11, 9))
    linear, radius = _replay_linear(rgb, rel, cfg, sample_rng(11, 9))
    assert radius == sample.meta["field_radius"]
    kernel = radial_slice(small_grid, radius).kernels[0]
    expected = pack_rggb(dequantize(quantize(mosaic(convolve(linear, kernel)), cfg.bit_depth)))
    np.testing.assert_array_equal(sample.input[:4], expected.data)


def test_target_independent_of_noise(small_grid):
    rgb, rel = _scene()
    quiet = synthesize_sample(rgb, rel, small_grid, _cfg(**QUIET), sample_rng(11, 2))
    loud = synthesize_sample(
        rgb, rel, small_grid, _cfg(psf_aug_sigma_range=[0.0, 0.0], noise={"shot": 1e-2, "read0": 1e-3}), sample_rng(11, 2)
    )
    np.testing.assert_array_equal(quiet.target, loud.target)
    assert not np.array_equal(quiet.input[:4], loud.input[:4])


def test_patch_must_cover_kernels(synthetic_grid):
    rgb, rel = _scene()
    with pytest.raises(ValidationError):
        synthesize_sample(rgb, rel, synthetic_grid, _cfg(patch_size=32), sample_rng(0, 0))


def test_sample_invariants_enforced():
    inp = np.zeros((6, 4, 4), np.float32)
    inp[4, 0, 0] = 1.0
    with pytest.raises(ValidationError):
        TrainingSample(inp, np.zeros((4, 4, 4)))
    inp[4] = 0.8
    inp[5, 1, 1] = 1.5
    with pytest.raises(ValidationError):
        TrainingSample(inp, np.zeros((4, 4, 4)))


def test_sample_rng_keyed_per_index():
    a = sample_rng(5, 0).random(4)
    assert np.array_equal(a, sample_rng(5, 0).random(4))
    assert not np.array_equal(a, sample_rng(5, 1).random(4))
    assert not np.array_equal(a, sample_rng(6, 0).random(4))
