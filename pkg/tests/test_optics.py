import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from dofsynth.core import DepthMap
from dofsynth.errors import (
    MalformedHeader,
    NonOddKernel,
    NormalizationOutOfRange,
    SigmaOutOfRange,
    ValidationError,
)
from dofsynth.optics import (
    KernelStack,
    PsfGrid,
    augment_psf,
    delta_grid,
    depth_weights,
    load_psf_grid,
    make_synthetic_grid,
    radial_slice,
    save_psf_grid,
)

STOPS = np.array([10.0, 5.0, 2.0, 1.0, 0.0])


def _write_raw(path, kernels, diopters=None, radii=None, k=None):
    """Grid file writer that skips validation, for corrupt-file cases."""
    d, r, c, kk, _ = kernels.shape
    diopters = np.linspace(10, 0, d) if diopters is None else diopters
    radii = np.linspace(0, 1, r) if radii is None else radii
    header = "\n".join(
        [
            "PSFGRID1",
            f"{d} {r} {k or kk} {c}",
            " ".join(map(repr, map(float, diopters))),
            " ".join(map(repr, map(float, radii))),
            "camera=test fnumber=2.0",
            "END",
        ]
    )
    with open(path, "wb") as fh:
        fh.write((header + "\n").encode())
        fh.write(np.ascontiguousarray(kernels, "<f4").tobytes())


def _deltas(d=2, r=2, k=5):
    kern = np.zeros((d, r, 3, k, k), np.float32)
    kern[..., k // 2, k // 2] = 1.0
    return kern


# -- grid I/O ---------------------------------------------------------------

def test_round_trip(tmp_path, small_grid):
    save_psf_grid(small_grid, tmp_path / "g.psf")
    g = load_psf_grid(tmp_path / "g.psf")
    np.testing.assert_array_equal(g.kernels, small_grid.kernels)
    np.testing.assert_array_equal(g.diopters, small_grid.diopters)
    assert g.camera == "synthetic" and g.f_number == small_grid.f_number


def test_full_size_grid(tmp_path, synthetic_grid):
    save_psf_grid(synthetic_grid, tmp_path / "g.psf")
    g = load_psf_grid(tmp_path / "g.psf")
    assert (g.n_depths, g.n_radii, g.kernel_size) == (20, 20, 31)
    assert g.kernels.shape == (20, 20, 3, 31, 31)


def test_sum_point_nine_rejected(tmp_path):
    kern = _deltas()
    kern[1, 0, 2, 2, 2] = 0.9
    _write_raw(tmp_path / "bad.psf", kern)
    with pytest.raises(NormalizationOutOfRange):
        load_psf_grid(tmp_path / "bad.psf")


def test_small_deviation_renormalized(tmp_path):
    kern = _deltas()
    kern[1, 0, 2, 2, 2] = 1.0005
    _write_raw(tmp_path / "off.psf", kern)
    g = load_psf_grid(tmp_path / "off.psf")
    assert g.kernels[1, 0, 2, 2, 2] == 1.0


def test_even_kernel_rejected(tmp_path):
    _write_raw(tmp_path / "even.psf", np.full((2, 2, 3, 30, 30), 1 / 900, np.float32))
    with pytest.raises(NonOddKernel):
        load_psf_grid(tmp_path / "even.psf")


def test_bad_magic(tmp_path):
    (tmp_path / "x.psf").write_bytes(b"NOTAGRID\nEND\n")
    with pytest.raises(MalformedHeader):
        load_psf_grid(tmp_path / "x.psf")


def test_truncated_blob(tmp_path, small_grid):
    save_psf_grid(small_grid, tmp_path / "g.psf")
    raw = (tmp_path / "g.psf").read_bytes()
    (tmp_path / "g.psf").write_bytes(raw[:-4])
    with pytest.raises(MalformedHeader):
        load_psf_grid(tmp_path / "g.psf")


def test_negative_values_rejected():
    kern = _deltas()
    kern[0, 0, 0, 0, 0] = -0.1
    kern[0, 0, 0, 2, 2] = 1.1
    with pytest.raises(ValidationError):
        PsfGrid(np.array([1.0, 0.0]), np.array([0.0, 1.0]), kern)


# -- depth weights ---------------------------------------------------------------

def _depth(diopters):
    d = np.atleast_2d(np.asarray(diopters, dtype=np.float64))
    with np.errstate(divide="ignore"):
        return DepthMap(np.where(d > 0, 1.0 / np.maximum(d, 1e-300), np.inf))


def test_exact_stop_hit():
    for i, d in enumerate(STOPS):
        w = depth_weights(_depth([[d]]), STOPS)
        assert w.layer_weight(i)[0, 0] == 1.0
        for j in range(STOPS.size):
            if j != i:
                assert w.layer_weight(j)[0, 0] == 0.0


def test_midpoint_half_weights():
    w = depth_weights(_depth([[3.5]]), STOPS)
    assert w.low[0, 0] == 1
    assert w.alpha[0, 0] == pytest.approx(0.5)


def test_clamp_nearer_than_first_stop():
    w = depth_weights(DepthMap(np.array([[0.05]])), STOPS)
    assert w.layer_weight(0)[0, 0] == 1.0


def test_infinity_hits_last_stop():
    w = depth_weights(DepthMap(np.array([[np.inf]])), STOPS)
    assert w.layer_weight(STOPS.size - 1)[0, 0] == 1.0


def test_used_layers():
    w = depth_weights(_depth([[10.0, 3.5]]), STOPS)
    assert w.used_layers() == [0, 1, 2]


@settings(max_examples=80, deadline=None)
@given(hnp.arrays(np.float64, (6, 7), elements=st.floats(1e-3, 1e4)))
def test_weights_partition_unity(z):
    w = depth_weights(DepthMap(z), STOPS)
    assert ((w.alpha >= 0) & (w.alpha <= 1)).all()
    total = sum(w.layer_weight(d) for d in range(STOPS.size))
    np.testing.assert_array_equal(total, 1.0)
    assert ((w.low >= 0) & (w.high <= STOPS.size - 1)).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, STOPS.size - 2))
def test_alpha_monotone_between_stops(i):
    d = np.linspace(STOPS[i], STOPS[i + 1], 101)
    w = depth_weights(_depth(d[None]), STOPS)
    a = w.layer_weight(i)[0]
    assert (np.diff(a) <= 1e-12).all()


def test_non_decreasing_stops_rejected():
    with pytest.raises(ValidationError):
        depth_weights(DepthMap(np.ones((2, 2))), np.array([1.0, 2.0, 0.0]))


# -- radial slices -------------------------------------------------------------

def test_radial_exact_stop(small_grid):
    for j, r in enumerate(small_grid.radii):
        np.testing.assert_array_equal(radial_slice(small_grid, float(r)).kernels, small_grid.kernels[:, j])


def test_radial_zero_is_on_axis(small_grid):
    np.testing.assert_array_equal(radial_slice(small_grid, 0.0).kernels, small_grid.kernels[:, 0])


def test_radial_midpoint_two_point_kernel():
    kern = np.zeros((2, 2, 3, 5, 5), np.float32)
    kern[:, 0, :, 2, 1] = 1.0
    kern[:, 1, :, 2, 3] = 1.0
    grid = PsfGrid(np.array([1.0, 0.0]), np.array([0.0, 1.0]), kern)
    out = radial_slice(grid, 0.5).kernels
    assert out[0, 0, 2, 1] == pytest.approx(0.5)
    assert out[0, 0, 2, 3] == pytest.approx(0.5)
    assert np.count_nonzero(out[0, 0]) == 2


def test_radial_out_of_range(small_grid):
    with pytest.raises(ValidationError):
        radial_slice(small_grid, 1.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 1.0))
def test_radial_slice_unit_sum(r):
    grid = make_synthetic_grid(n_depths=3, n_radii=4, k=9)
    out = radial_slice(grid, r).kernels.astype(np.float64)
    assert (out >= 0).all()
    np.testing.assert_allclose(out.sum(axis=(-2, -1)), 1.0, atol=1e-6)


# -- PSF augmentation ---------------------------------------------------------------

def test_augment_sigma_zero_identity(small_grid):
    stack = radial_slice(small_grid, 0.3)
    assert augment_psf(stack, 0.0).kernels is stack.kernels


def test_augment_delta_unit_sigma():
    stack = radial_slice(delta_grid(k=11), 0.0)
    out = augment_psf(stack, 1.0).kernels[0, 0].astype(np.float64)
    # independent oracle: 2-D Gaussian on the 7x7 support of a 3-sigma window
    x = np.arange(-3, 4)
    g = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / 2.0)
    g /= g.sum()
    expected = np.zeros((11, 11))
    expected[2:9, 2:9] = g
    np.testing.assert_allclose(out, expected, atol=1e-7)
    assert out.sum() == pytest.approx(1.0, abs=1e-6)


def test_augment_sigma_bounds(small_grid):
    with pytest.raises(SigmaOutOfRange):
        augment_psf(radial_slice(small_grid, 0.0), 3.0, sigma_range=(0.0, 2.0))
    with pytest.raises(ValidationError):
        augment_psf(radial_slice(small_grid, 0.0))


def test_augment_draws_sigma():
    stack = radial_slice(delta_grid(k=9), 0.0)
    a = augment_psf(stack, rng=np.random.default_rng(0), sigma_range=(0.5, 1.5))
    b = augment_psf(stack, rng=np.random.default_rng(0), sigma_range=(0.5, 1.5))
    np.testing.assert_array_equal(a.kernels, b.kernels)
    assert a.kernels[0, 0, 4, 4] < 1.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 1.0))
def test_augment_unit_sum(sigma, r):
    grid = make_synthetic_grid(n_depths=3, n_radii=3, k=9)
    out = augment_psf(radial_slice(grid, r), sigma).kernels.astype(np.float64)
    assert (out >= 0).all()
    np.testing.assert_allclose(out.sum(axis=(-2, -1)), 1.0, atol=1e-6)


# -- synthetic grids -------------------------------------------------------------

def test_synthetic_in_focus_stop_is_delta(synthetic_grid):
    # focus at infinity: the last (0 diopter) stop is a centred delta at every radius
    last = synthetic_grid.kernels[-1]
    c = synthetic_grid.kernel_size // 2
    assert (last[..., c, c] == 1.0).all()
    assert np.count_nonzero(last) == last.shape[0] * last.shape[1]


def test_synthetic_blur_grows_with_defocus(small_grid):
    c = small_grid.kernel_size // 2
    peaks = small_grid.kernels[:, 0, 1, c, c]
    assert (np.diff(peaks) >= 0).all()


def test_kernel_stack_rejects_bad_shape():
    with pytest.raises(ValidationError):
        KernelStack(np.array([1.0, 0.0]), np.zeros((3, 3, 5, 5)))
