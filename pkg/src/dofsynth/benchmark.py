"""Fast-vs-oracle validation scenes and renderer benchmarking."""

from __future__ import annotations

import statistics
import time
import tracemalloc

import numpy as np
from scipy import ndimage

from .core import DepthMap, PlanarImage
from .dataprep import make_field_map
from .metrics import psnr
from .optics import PsfGrid, radial_slice
from .render import render_fast, render_oracle

EXACT_TOL = 1e-5


def _diopter_depth(d: np.ndarray) -> DepthMap:
    with np.errstate(divide="ignore"):
        return DepthMap(np.where(d > 0, 1.0 / np.maximum(d, 1e-300), np.inf))


def ramp_depth(grid: PsfGrid, shape, rng, d_from=None, d_to=None, axis=None) -> DepthMap:
    """Linear diopter ramp between two values (random when omitted)."""
    h, w = shape
    d_max = grid.diopters[0]
    if d_from is None:
        d_from, d_to = rng.uniform(0.0, d_max, size=2)
    if axis is None:
        axis = int(rng.integers(0, 3))
    yy, xx = np.mgrid[0:h, 0:w]
    t = {0: xx / max(w - 1, 1), 1: yy / max(h - 1, 1)}.get(axis, (xx + yy) / max(h + w - 2, 1))
    return _diopter_depth(d_from + (d_to - d_from) * t)


def _compare(name, kind, fast, oracle, threshold):
    err = float(np.abs(fast.data.astype(np.float64) - oracle.data).max())
    rec = {
        "scene": name,
        "kind": kind,
        "max_abs_error": err,
        "psnr_db": psnr(fast, oracle),
        "threshold": threshold,
    }
    rec["passed"] = None if threshold is None else bool(err < threshold)
    return rec


def validate_suite(grid: PsfGrid, size: int = 64, seed: int = 0, n_random: int = 3, tol: float = EXACT_TOL) -> list[dict]:
    """Compare the two renderers on generated scenes.

    Constant-depth, ramp, step-edge and smooth random depth scenes use one
    field radius per scene and must agree to ``tol``. The per-pixel-field
    scene measures the in-patch spatial-variance approximation and has no
    threshold.
    """
    rng = np.random.default_rng(seed)
    shape = (size, size)
    records = []

    def run(name, kind, depth, radius):
        img = PlanarImage(rng.random((3, size, size), dtype=np.float32))
        fast = render_fast(img, depth, radial_slice(grid, radius))
        oracle = render_oracle(img, depth, grid, radius, max_pixels=None)
        records.append(_compare(name, kind, fast, oracle, tol))

    for i, d in enumerate(grid.diopters):
        run(f"constant_stop_{i}", "constant", _diopter_depth(np.full(shape, d)), float(rng.uniform()))
    for i in range(n_random):
        run(f"ramp_{i}", "ramp", ramp_depth(grid, shape, rng), float(rng.uniform()))
    for i in range(n_random):
        d1, d2 = rng.uniform(0.0, grid.diopters[0], size=2)
        d = np.full(shape, d1)
        d[:, size // 2 :] = d2
        run(f"step_edge_{i}", "step", _diopter_depth(d), float(rng.uniform()))
    for i in range(n_random):
        noise = ndimage.gaussian_filter(rng.standard_normal(shape), size / 8)
        noise = (noise - noise.min()) / (np.ptp(noise) or 1.0)
        run(f"random_field_{i}", "random", _diopter_depth(noise * grid.diopters[0]), float(rng.uniform()))

    # in-patch spatial variance: the patch sits off-axis on a small virtual sensor
    sensor = (4 * size, 4 * size)
    origin = (int(2.5 * size), int(2.5 * size))
    field = make_field_map(origin, size, sensor).data[0]
    img = PlanarImage(rng.random((3, size, size), dtype=np.float32))
    depth = ramp_depth(grid, shape, rng)
    centre = float(field[size // 2, size // 2])
    fast = render_fast(img, depth, radial_slice(grid, centre))
    oracle = render_oracle(img, depth, grid, field, max_pixels=None)
    records.append(_compare("per_pixel_field", "approximation", fast, oracle, None))
    return records


def _median_ms(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def _peak_bytes(fn):
    tracemalloc.start()
    try:
        fn()
        return tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()


def bench_renderers(grid: PsfGrid, sizes=(64, 512), reps: int = 10, seed: int = 0, radius: float = 0.5, oracle_reps: int | None = None) -> list[dict]:
    """Median wall-clock and traced peak memory of both renderers.

    The scene is a random image over a diagonal diopter ramp that touches
    every depth stop. Timing covers kernel preparation as well as rendering.
    One warm-up call per renderer precedes timing; memory is traced in a
    separate call.
    """
    rng = np.random.default_rng(seed)
    records = []
    for n in sizes:
        img = PlanarImage(rng.random((3, n, n), dtype=np.float32))
        depth = ramp_depth(grid, (n, n), rng, grid.diopters[0], 0.0, axis=2)

        def fast():
            return render_fast(img, depth, radial_slice(grid, radius))

        def oracle():
            return render_oracle(img, depth, grid, radius, max_pixels=None)

        fast()
        oracle()
        fast_ms = _median_ms(fast, reps)
        oracle_ms = _median_ms(oracle, oracle_reps or reps)
        records.append(
            {
                "size": n,
                "depth_stops": grid.n_depths,
                "kernel_size": grid.kernel_size,
                "reps": reps,
                "fast_ms": fast_ms,
                "oracle_ms": oracle_ms,
                "speedup": oracle_ms / fast_ms,
                "fast_peak_mb": _peak_bytes(fast) / 2**20,
                "oracle_peak_mb": _peak_bytes(oracle) / 2**20,
            }
        )
    return records
