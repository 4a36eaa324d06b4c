"""Depth-dependent blur rendering.

Two renderers produce the same image model: each output pixel is the input
convolved with a PSF blended between the two depth stops bracketing the
pixel's depth.

* :func:`render_fast` convolves the whole image once per referenced depth
  stop and blends the resulting layers per pixel.
* :func:`render_oracle` assembles an individual kernel for every pixel and
  gathers its neighbourhood directly. It is slow and serves as the reference.

Both pad by edge replication.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft, ndimage

from .core import DepthMap, PlanarImage
from .errors import DimensionMismatch, EvenKernel, ImageTooLarge, ValidationError, WeightStackMismatch
from .optics import (
    DepthWeights,
    KernelStack,
    PsfGrid,
    _normalize,
    _radial_bracket,
    depth_weights,
    radial_slice,
)

DIRECT_MAX_K = 15
ORACLE_MAX_PIXELS = 512 * 512


def _as_kernels(kernel, channels: int) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float32)
    if k.ndim == 2:
        k = np.broadcast_to(k, (channels,) + k.shape)
    if k.ndim != 3 or k.shape[1] != k.shape[2]:
        raise ValidationError(f"kernel must be (k, k) or (C, k, k), got {k.shape}")
    if k.shape[1] % 2 == 0:
        raise EvenKernel(f"kernel size must be odd, got {k.shape[1]}")
    if k.shape[0] != channels:
        raise ValidationError(f"kernel has {k.shape[0]} channels, image has {channels}")
    return k


def _is_delta(kernels: np.ndarray) -> bool:
    c = kernels.shape[-1] // 2
    if not (kernels[:, c, c] == 1.0).all():
        return False
    return np.count_nonzero(kernels) == kernels.shape[0]


class _LayerConvolver:
    """Convolves one image with many kernels of the same size.

    For large kernels the spectrum of the padded image is computed once and
    reused for every kernel.
    """

    def __init__(self, data: np.ndarray, k: int):
        self.data = data
        self.k = k
        self.r = k // 2
        self.channels, self.h, self.w = data.shape
        self._spectrum = None
        if k > DIRECT_MAX_K:
            padded = np.pad(data, ((0, 0), (self.r, self.r), (self.r, self.r)), mode="edge")
            self.fshape = [fft.next_fast_len(n + k - 1, real=True) for n in padded.shape[1:]]
            self._spectrum = fft.rfft2(padded, self.fshape, axes=(1, 2))

    def __call__(self, kernels: np.ndarray) -> np.ndarray:
        if _is_delta(kernels):
            return self.data.copy()
        if self._spectrum is None:
            out = np.empty_like(self.data)
            for c in range(self.channels):
                ndimage.convolve(self.data[c], kernels[c], output=out[c], mode="nearest")
            return out
        kf = fft.rfft2(kernels, self.fshape, axes=(1, 2))
        full = fft.irfft2(self._spectrum * kf, self.fshape, axes=(1, 2))
        k1 = self.k - 1
        return full[:, k1 : k1 + self.h, k1 : k1 + self.w].astype(np.float32)


def convolve(img: PlanarImage, kernel) -> PlanarImage:
    """Per-channel 2-D convolution with replicate-edge padding, same size out.

    Kernels up to 15x15 go through direct convolution, larger ones through
    the FFT. Exact centred deltas return the input unchanged.
    """
    if not isinstance(img, PlanarImage):
        img = PlanarImage(img)
    kernels = _as_kernels(kernel, img.channels)
    return PlanarImage(_LayerConvolver(img.data, kernels.shape[-1])(kernels))


def _check_weights(weights: DepthWeights, stack: KernelStack, shape):
    if weights.n_stops != stack.n_depths:
        raise WeightStackMismatch(f"weights use {weights.n_stops} stops, stack has {stack.n_depths}")
    if weights.shape != tuple(shape):
        raise WeightStackMismatch(f"weights cover {weights.shape}, image is {tuple(shape)}")


def _blend(a_low, a_high, alpha):
    alpha = alpha.astype(np.float32)
    mixed = alpha * a_low + (1.0 - alpha) * a_high
    return np.where(a_low == a_high, a_low, mixed)


def render_fast(
    linear_img: PlanarImage,
    depth: DepthMap | None,
    stack: KernelStack,
    weights: DepthWeights | None = None,
    materialize_all: bool = False,
) -> PlanarImage:
    """Layered rendering: convolve per depth stop, then blend in image space.

    Only stops that carry weight somewhere are convolved (unless
    ``materialize_all``), and each layer is consumed as soon as it is built,
    so at most one layer is alive at a time. ``weights`` are derived from
    ``depth`` when omitted.
    """
    if not isinstance(linear_img, PlanarImage):
        linear_img = PlanarImage(linear_img)
    if weights is None:
        if depth is None:
            raise ValidationError("render_fast needs depth or weights")
        weights = depth_weights(depth, stack.diopters)
    elif depth is not None and (depth.height, depth.width) != weights.shape:
        raise WeightStackMismatch("depth map and weights differ in size")
    _check_weights(weights, stack, linear_img.shape[1:])

    data = linear_img.data
    conv = _LayerConvolver(data, stack.kernel_size)
    low_vals = np.zeros_like(data)
    high_vals = np.zeros_like(data)
    low, high = weights.low, weights.high
    used = set(weights.used_layers())
    layers = range(stack.n_depths) if materialize_all else sorted(used)
    for d in layers:
        layer = conv(stack.kernels[d])
        if d not in used:
            continue
        m = low == d
        low_vals[:, m] = layer[:, m]
        m = high == d
        high_vals[:, m] = layer[:, m]
        del layer
    return PlanarImage(_blend(low_vals, high_vals, weights.alpha))


def _field_array(field, shape):
    if isinstance(field, PlanarImage):
        field = field.data[0]
    f = np.asarray(field, dtype=np.float64)
    if f.ndim == 0:
        return float(f)
    if f.shape != tuple(shape):
        raise DimensionMismatch(f"field map {f.shape} does not match image {tuple(shape)}")
    return f


def render_oracle(
    linear_img: PlanarImage,
    depth: DepthMap,
    grid: PsfGrid | KernelStack,
    field=0.0,
    max_pixels: int | None = ORACLE_MAX_PIXELS,
    block_rows: int = 8,
) -> PlanarImage:
    """Reference renderer with an individually interpolated kernel per pixel.

    ``field`` is either a scalar normalized radius (shared by the whole
    image) or a per-pixel field map, in which case kernels are also blended
    radially per pixel. Accumulates in float64.
    """
    if not isinstance(linear_img, PlanarImage):
        linear_img = PlanarImage(linear_img)
    c, h, w = linear_img.shape
    if (depth.height, depth.width) != (h, w):
        raise DimensionMismatch("depth map does not match image")
    if max_pixels is not None and h * w > max_pixels:
        raise ImageTooLarge(f"{w}x{h} exceeds the oracle guard of {max_pixels} pixels")

    f = _field_array(field, (h, w))
    per_pixel_field = isinstance(f, np.ndarray)
    if isinstance(grid, KernelStack):
        if per_pixel_field:
            raise ValidationError("a per-pixel field map needs a full PsfGrid")
        table = grid.kernels.astype(np.float64)
    elif per_pixel_field:
        table = grid.kernels.astype(np.float64)
    else:
        table = radial_slice(grid, f).kernels.astype(np.float64)
    diopters = grid.diopters
    weights = depth_weights(depth, diopters)

    k = table.shape[-1]
    r = k // 2
    # convolution flips the kernel relative to the gather window
    table = table[..., ::-1, ::-1]
    padded = np.pad(linear_img.data.astype(np.float64), ((0, 0), (r, r), (r, r)), mode="edge")
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))  # (C, H, W, k, k)
    if per_pixel_field:
        rj, beta = _radial_bracket(grid.radii, f)

    out = np.empty((c, h, w))
    for y0 in range(0, h, block_rows):
        rows = slice(y0, min(y0 + block_rows, h))
        lo = weights.low[rows]
        a = weights.alpha[rows][..., None, None, None]
        if per_pixel_field:
            b = beta[rows][..., None, None, None]
            j = rj[rows]
            if grid.n_radii == 1:
                k_lo = table[lo, 0]
                k_hi = table[lo + 1, 0]
            else:
                k_lo = _normalize(b * table[lo, j] + (1 - b) * table[lo, j + 1])
                k_hi = _normalize(b * table[lo + 1, j] + (1 - b) * table[lo + 1, j + 1])
        else:
            k_lo = table[lo]
            k_hi = table[lo + 1]
        kern = a * k_lo + (1.0 - a) * k_hi  # (rows, W, C, k, k)
        out[:, rows] = np.einsum("ywcpq,cywpq->cyw", kern, windows[:, rows], optimize=True)
    return PlanarImage(out)


def render_tiled(
    linear_img: PlanarImage,
    depth: DepthMap,
    grid: PsfGrid,
    tile: int = 64,
    origin=(0, 0),
    sensor_size=None,
) -> PlanarImage:
    """Spatially varying rendering of a full frame by independent tiles.

    Each tile is rendered with :func:`render_fast` using the kernels at the
    field radius of its centre; tiles are rendered with a halo so seams see
    real neighbours rather than padding. ``origin``/``sensor_size`` place the
    image on the sensor (defaults: the image is the full sensor).
    """
    from .dataprep import field_radius

    c, h, w = linear_img.shape
    if sensor_size is None:
        sensor_size = (w, h)
    halo = grid.kernel_size // 2
    out = np.empty((c, h, w), dtype=np.float32)
    zvals = depth.values
    for y0 in range(0, h, tile):
        for x0 in range(0, w, tile):
            y1, x1 = min(y0 + tile, h), min(x0 + tile, w)
            ya, yb = max(y0 - halo, 0), min(y1 + halo, h)
            xa, xb = max(x0 - halo, 0), min(x1 + halo, w)
            cx = origin[0] + 0.5 * (x0 + x1 - 1)
            cy = origin[1] + 0.5 * (y0 + y1 - 1)
            stack = radial_slice(grid, field_radius(cx, cy, sensor_size))
            part = render_fast(
                PlanarImage(linear_img.data[:, ya:yb, xa:xb]),
                DepthMap(zvals[ya:yb, xa:xb]),
                stack,
            )
            out[:, y0:y1, x0:x1] = part.data[:, y0 - ya : y1 - ya, x0 - xa : x1 - xa]
    return PlanarImage(out)
