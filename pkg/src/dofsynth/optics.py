"""PSF grids, depth/radial interpolation weights and PSF augmentation.

Depth stops are stored in diopters (1/m), strictly decreasing from the
nearest stop down to 0 (optical infinity). Radial stops are normalized
field radii from 0 (on-axis) to 1 (sensor corner).

Grid file layout (``PSFGRID1``)::

    PSFGRID1
    <D> <R> <k> <C>
    <D diopter values>
    <R radial values>
    camera=<id> fnumber=<f>
    END
    <little-endian float32 blob, D*R*C*k*k values, (depth, radial, channel, row, col)>
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DepthMap
from .errors import (
    MalformedHeader,
    NonOddKernel,
    NormalizationOutOfRange,
    SigmaOutOfRange,
    ValidationError,
)

MAGIC = "PSFGRID1"
SUM_TOL = 1e-5
RENORM_TOL = 1e-3


def _check_kernels(kernels: np.ndarray, tol: float = SUM_TOL):
    k = kernels.shape[-1]
    if kernels.shape[-2] != k:
        raise ValidationError(f"kernels must be square, got {kernels.shape[-2:]}")
    if k % 2 == 0:
        raise NonOddKernel(f"kernel size must be odd, got {k}")
    if not np.isfinite(kernels).all():
        raise ValidationError("kernels contain NaN or Inf")
    if (kernels < 0).any():
        raise ValidationError("kernel values must be non-negative")
    sums = kernels.sum(axis=(-2, -1), dtype=np.float64)
    if np.abs(sums - 1.0).max() > tol:
        raise NormalizationOutOfRange(f"kernel sums span [{sums.min():.6g}, {sums.max():.6g}]")


@dataclass(frozen=True, eq=False)
class PsfGrid:
    """Kernels tabulated over depth stops, radial stops and RGB channels.

    ``kernels`` has shape ``(D, R, 3, k, k)``.
    """

    diopters: np.ndarray
    radii: np.ndarray
    kernels: np.ndarray
    camera: str = "unknown"
    f_number: float = 0.0

    def __post_init__(self):
        diopters = np.asarray(self.diopters, dtype=np.float64)
        radii = np.asarray(self.radii, dtype=np.float64)
        kernels = np.asarray(self.kernels, dtype=np.float32)
        if diopters.ndim != 1 or diopters.size < 2:
            raise ValidationError("need at least 2 depth stops")
        if (np.diff(diopters) >= 0).any() or diopters[-1] != 0.0:
            raise ValidationError("diopters must strictly decrease and end at 0 (infinity)")
        if radii.ndim != 1 or radii.size < 1:
            raise ValidationError("need at least 1 radial stop")
        if radii[0] != 0.0 or (np.diff(radii) <= 0).any() or (radii.size > 1 and radii[-1] != 1.0):
            raise ValidationError("radial stops must increase strictly from 0 to 1")
        if kernels.ndim != 5 or kernels.shape[:3] != (diopters.size, radii.size, 3):
            raise ValidationError(
                f"kernels must have shape (D, R, 3, k, k) = ({diopters.size}, {radii.size}, 3, k, k), "
                f"got {kernels.shape}"
            )
        _check_kernels(kernels)
        for name, arr in (("diopters", diopters), ("radii", radii), ("kernels", kernels)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_depths(self) -> int:
        return self.diopters.size

    @property
    def n_radii(self) -> int:
        return self.radii.size

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[-1]


@dataclass(frozen=True, eq=False)
class KernelStack:
    """Per-depth kernels for one field position, shape ``(D, 3, k, k)``."""

    diopters: np.ndarray
    kernels: np.ndarray
    radius: float = 0.0

    def __post_init__(self):
        diopters = np.asarray(self.diopters, dtype=np.float64)
        kernels = np.asarray(self.kernels, dtype=np.float32)
        if kernels.ndim != 4 or kernels.shape[0] != diopters.size:
            raise ValidationError(f"stack shape {kernels.shape} does not match {diopters.size} stops")
        _check_kernels(kernels)
        diopters.setflags(write=False)
        kernels.setflags(write=False)
        object.__setattr__(self, "diopters", diopters)
        object.__setattr__(self, "kernels", kernels)

    @property
    def n_depths(self) -> int:
        return self.diopters.size

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[-1]


@dataclass(frozen=True, eq=False)
class DepthWeights:
    """Per-pixel blend between adjacent depth stops.

    ``alpha`` is the weight on ``low``; ``high = low + 1`` gets ``1 - alpha``.
    """

    low: np.ndarray
    alpha: np.ndarray
    n_stops: int

    @property
    def high(self) -> np.ndarray:
        return self.low + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.low.shape

    def layer_weight(self, d: int) -> np.ndarray:
        """Total weight of depth stop ``d`` at every pixel."""
        w = np.where(self.low == d, self.alpha, 0.0)
        return w + np.where(self.high == d, 1.0 - self.alpha, 0.0)

    def used_layers(self) -> list[int]:
        """Indices of stops with nonzero weight at some pixel."""
        used = set(np.unique(self.low[self.alpha > 0]).tolist())
        used |= set((np.unique(self.low[self.alpha < 1]) + 1).tolist())
        return sorted(int(d) for d in used)


# -- file I/O -----------------------------------------------------------------

def save_psf_grid(grid: PsfGrid, path) -> None:
    d, r, c, k, _ = grid.kernels.shape
    header = [
        MAGIC,
        f"{d} {r} {k} {c}",
        " ".join(repr(float(v)) for v in grid.diopters),
        " ".join(repr(float(v)) for v in grid.radii),
        f"camera={grid.camera} fnumber={grid.f_number!r}",
        "END",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(grid.kernels, dtype="<f4").tobytes())


def load_psf_grid(path) -> PsfGrid:
    """Read a grid file, renormalizing kernels that are slightly off unit sum."""
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = []
    pos = 0
    for _ in range(16):
        end = raw.find(b"\n", pos)
        if end < 0:
            raise MalformedHeader(f"{path}: header not terminated")
        try:
            line = raw[pos:end].decode("ascii").strip()
        except UnicodeDecodeError as exc:
            raise MalformedHeader(f"{path}: non-text header") from exc
        pos = end + 1
        if line == "END":
            break
        lines.append(line)
    else:
        raise MalformedHeader(f"{path}: missing END marker")
    if not lines or lines[0] != MAGIC:
        raise MalformedHeader(f"{path}: bad magic")
    try:
        d, r, k, c = (int(v) for v in lines[1].split())
        diopters = np.array([float(v) for v in lines[2].split()])
        radii = np.array([float(v) for v in lines[3].split()])
    except (IndexError, ValueError) as exc:
        raise MalformedHeader(f"{path}: cannot parse geometry") from exc
    if c != 3 or diopters.size != d or radii.size != r or d < 1 or r < 1 or k < 1:
        raise MalformedHeader(f"{path}: inconsistent geometry D={d} R={r} k={k} C={c}")
    if k % 2 == 0:
        raise NonOddKernel(f"{path}: kernel size must be odd, got {k}")
    meta = dict(item.split("=", 1) for item in " ".join(lines[4:]).split() if "=" in item)
    n = d * r * c * k * k
    blob = raw[pos:]
    if len(blob) != 4 * n:
        raise MalformedHeader(f"{path}: expected {4 * n} data bytes, found {len(blob)}")
    kernels = np.frombuffer(blob, dtype="<f4").reshape(d, r, c, k, k).astype(np.float32)

    if (kernels < 0).any() or not np.isfinite(kernels).all():
        raise NormalizationOutOfRange(f"{path}: kernels must be finite and non-negative")
    sums = kernels.sum(axis=(-2, -1), dtype=np.float64)
    dev = np.abs(sums - 1.0)
    if dev.max() > RENORM_TOL:
        raise NormalizationOutOfRange(f"{path}: kernel sum deviates by {dev.max():.3g}")
    fix = dev > 1e-6
    if fix.any():
        kernels[fix] = (kernels[fix] / sums[fix][:, None, None]).astype(np.float32)
    return PsfGrid(
        diopters,
        radii,
        kernels,
        camera=meta.get("camera", "unknown"),
        f_number=float(meta.get("fnumber", 0.0)),
    )


# -- interpolation ---------------------------------------------------------------

def to_diopters(depth) -> np.ndarray:
    z = depth.values if isinstance(depth, DepthMap) else np.asarray(depth, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(np.isinf(z), 0.0, 1.0 / z)


def depth_weights(depth: DepthMap, diopters) -> DepthWeights:
    """Linear-in-diopter blend weights between bracketing depth stops.

    Depths beyond either end of the stop list clamp to that stop.
    """
    stops = np.asarray(diopters, dtype=np.float64)
    if stops.ndim != 1 or stops.size < 2 or (np.diff(stops) >= 0).any():
        raise ValidationError("depth stops must be strictly decreasing diopters")
    d = np.clip(to_diopters(depth), stops[-1], stops[0])
    # stops[low] >= d >= stops[low + 1]
    asc = stops[::-1]
    pos = np.searchsorted(asc, d, side="left")
    low = np.clip(stops.size - 1 - pos, 0, stops.size - 2)
    upper = stops[low]
    lower = stops[low + 1]
    alpha = np.clip((d - lower) / (upper - lower), 0.0, 1.0)
    return DepthWeights(low.astype(np.int64), alpha, stops.size)


def _radial_bracket(radii: np.ndarray, r):
    r = np.clip(np.asarray(r, dtype=np.float64), 0.0, 1.0)
    if radii.size == 1:
        return np.zeros(np.shape(r), dtype=np.int64), np.ones(np.shape(r))
    j = np.clip(np.searchsorted(radii, r, side="right") - 1, 0, radii.size - 2)
    beta = (radii[j + 1] - r) / (radii[j + 1] - radii[j])
    return j, np.clip(beta, 0.0, 1.0)


def _normalize(kernels: np.ndarray) -> np.ndarray:
    return kernels / kernels.sum(axis=(-2, -1), keepdims=True)


def radial_slice(grid: PsfGrid, r: float) -> KernelStack:
    """Per-depth kernels at normalized field radius ``r``.

    Kernels are blended linearly between the bracketing radial stops and
    renormalized to unit sum.
    """
    if not 0.0 <= r <= 1.0:
        raise ValidationError(f"field radius must be in [0, 1], got {r}")
    j, beta = _radial_bracket(grid.radii, r)
    j = int(j)
    beta = float(beta)
    if grid.n_radii == 1 or beta == 1.0:
        kernels = grid.kernels[:, j]
    elif beta == 0.0:
        kernels = grid.kernels[:, j + 1]
    else:
        blend = beta * grid.kernels[:, j].astype(np.float64) + (1.0 - beta) * grid.kernels[:, j + 1]
        kernels = _normalize(blend).astype(np.float32)
    return KernelStack(grid.diopters, kernels, radius=float(r))


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian truncated at 3 sigma."""
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    with np.errstate(over="ignore"):  # tiny sigma: off-centre taps underflow to 0
        w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def augment_psf(stack: KernelStack, sigma: float | None = None, rng=None, sigma_range=(0.0, 2.0)) -> KernelStack:
    """Blur every kernel with a small Gaussian to mimic assembly tolerances.

    If ``sigma`` is None it is drawn uniformly from ``sigma_range`` with
    ``rng``. Kernels keep their size ``k``; energy spilling past the border
    is dropped before renormalizing.
    """
    lo, hi = sigma_range
    if sigma is None:
        if rng is None:
            raise ValidationError("either sigma or rng is required")
        sigma = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    if not lo <= sigma <= hi:
        raise SigmaOutOfRange(f"sigma {sigma} outside [{lo}, {hi}]")
    if sigma == 0.0:
        return stack
    g = gaussian_kernel1d(sigma)
    k = stack.kernel_size
    rad = g.size // 2
    kern = stack.kernels.astype(np.float64)
    padded = np.pad(kern, [(0, 0), (0, 0), (rad, rad), (rad, rad)])
    # separable full convolution, then crop back to k x k
    rows = sum(g[i] * padded[:, :, i : i + k, :] for i in range(g.size))
    out = sum(g[i] * rows[:, :, :, i : i + k] for i in range(g.size))
    return KernelStack(stack.diopters, _normalize(out).astype(np.float32), radius=stack.radius)


# -- synthetic grids ---------------------------------------------------------------

def _disk_kernel(k: int, radius: float, stretch: float = 1.0, supersample: int = 8) -> np.ndarray:
    """Anti-aliased elliptical disk, semi-axes ``radius*stretch`` (x) and ``radius`` (y)."""
    kern = np.zeros((k, k))
    c = k // 2
    if radius <= 0.0:
        kern[c, c] = 1.0
        return kern
    s = supersample
    offs = (np.arange(s) + 0.5) / s - 0.5
    coords = (np.arange(k) - c)[:, None] + offs[None, :]
    coords = coords.ravel()
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    inside = (xx / (radius * stretch)) ** 2 + (yy / radius) ** 2 <= 1.0
    kern = inside.reshape(k, s, k, s).mean(axis=(1, 3))
    if kern.sum() == 0:
        kern[c, c] = 1.0
    return kern / kern.sum()


def make_synthetic_grid(
    n_depths: int = 20,
    n_radii: int = 20,
    k: int = 31,
    z_min: float = 0.1,
    focus_diopter: float = 0.0,
    max_radius: float | None = None,
    field_gain: float = 0.3,
    chromatic: float = 0.04,
    camera: str = "synthetic",
    f_number: float = 2.2,
) -> PsfGrid:
    """Analytic defocus grid whose blur radius grows linearly with diopter defocus.

    Depth stops are uniform in diopters from ``1/z_min`` to 0. The disk is
    stretched along the radial axis by ``1 + field_gain * r**2`` and scaled
    per channel by ``1 + chromatic * (c - 1)`` to fake lateral aberration.
    """
    if k % 2 == 0:
        raise NonOddKernel(f"kernel size must be odd, got {k}")
    diopters = np.linspace(1.0 / z_min, 0.0, n_depths)
    radii = np.linspace(0.0, 1.0, n_radii) if n_radii > 1 else np.zeros(1)
    defocus = np.abs(diopters - focus_diopter)
    if max_radius is None:
        max_radius = max(k // 2 - 1.5, 0.0) / ((1 + field_gain) * (1 + chromatic))
    scale = max_radius / defocus.max() if defocus.max() > 0 else 0.0
    kernels = np.empty((n_depths, n_radii, 3, k, k), dtype=np.float32)
    for i, dd in enumerate(defocus):
        for j, r in enumerate(radii):
            stretch = 1.0 + field_gain * r**2
            for c in range(3):
                rad = scale * dd * (1.0 + chromatic * (c - 1))
                kernels[i, j, c] = _disk_kernel(k, rad, stretch)
    return PsfGrid(diopters, radii, kernels, camera=camera, f_number=f_number)


def delta_grid(n_depths: int = 4, n_radii: int = 2, k: int = 5, z_min: float = 0.1) -> PsfGrid:
    """Grid of identity kernels, useful for degenerate-pipeline checks."""
    kernels = np.zeros((n_depths, n_radii, 3, k, k), dtype=np.float32)
    kernels[..., k // 2, k // 2] = 1.0
    radii = np.linspace(0.0, 1.0, n_radii) if n_radii > 1 else np.zeros(1)
    return PsfGrid(np.linspace(1.0 / z_min, 0.0, n_depths), radii, kernels, camera="delta")
