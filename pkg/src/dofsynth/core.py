"""Immutable raster types shared by every stage of the simulator.

Arrays are stored read-only; operations produce new instances instead of
mutating. Images are channel-major ``(C, H, W)`` float32, mosaics are a
single ``(H, W)`` plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NonFiniteValue,
    NonPositiveDepth,
    OddDimensions,
    ValidationError,
)

LINEAR = "linear"
QUANTIZED = "quantized"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PlanarImage:
    """Multi-channel linear-radiance raster of shape ``(C, H, W)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise ValidationError(f"expected (C, H, W) data, got shape {data.shape}")
        c, h, w = data.shape
        if c not in (1, 3, 4):
            raise ValidationError(f"channel count must be 1, 3 or 4, got {c}")
        if h <= 0 or w <= 0:
            raise ValidationError(f"empty image of shape {data.shape}")
        data = data.astype(np.float32, copy=False)
        if not np.isfinite(data).all():
            raise NonFiniteValue("image contains NaN or Inf")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class BayerImage:
    """Single-plane RGGB mosaic.

    ``domain`` is ``"linear"`` (float values, nominally in [0, 1]) or
    ``"quantized"`` (integer digital numbers in ``[0, 2**bit_depth - 1]``).
    """

    data: np.ndarray
    domain: str = LINEAR
    bit_depth: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValidationError(f"mosaic must be 2-D, got shape {data.shape}")
        h, w = data.shape
        if h <= 0 or w <= 0 or h % 2 or w % 2:
            raise OddDimensions(f"mosaic dimensions must be even and positive, got {w}x{h}")
        if self.domain == LINEAR:
            data = data.astype(np.float32, copy=False)
            if not np.isfinite(data).all():
                raise NonFiniteValue("mosaic contains NaN or Inf")
        elif self.domain == QUANTIZED:
            if self.bit_depth is None:
                raise ValidationError("quantized mosaic requires bit_depth")
            top = 2 ** self.bit_depth - 1
            as_float = np.asarray(data, dtype=np.float64)
            if (
                not np.isfinite(as_float).all()
                or (as_float != np.round(as_float)).any()
                or as_float.min() < 0
                or as_float.max() > top
            ):
                raise ValidationError(f"quantized values must be integers in [0, {top}]")
            data = data.astype(np.uint16)
        else:
            raise ValidationError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Metric depth in meters; ``+inf`` encodes optical infinity."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValidationError(f"depth map must be a non-empty 2-D array, got {values.shape}")
        if np.isnan(values).any() or np.isneginf(values).any():
            raise NonFiniteValue("depth map contains NaN or -Inf")
        if (values <= 0).any():
            raise NonPositiveDepth("depth values must be > 0")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class RelativeDepthMap:
    """Relative depth in [0, 1] where 1 is the nearest point of the scene.

    Out-of-range values are clamped on construction.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValidationError(f"relative depth must be a non-empty 2-D array, got {values.shape}")
        if not np.isfinite(values).all():
            raise NonFiniteValue("relative depth contains NaN or Inf")
        object.__setattr__(self, "values", _frozen(np.clip(values, 0.0, 1.0)))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def validate_pair(img: PlanarImage, depth: DepthMap | RelativeDepthMap) -> None:
    """Check that an image and its depth map are aligned.

    The per-type invariants are enforced at construction; raw arrays are
    wrapped first so their invariants get checked too.
    """
    if not isinstance(img, PlanarImage):
        img = PlanarImage(img)
    if not isinstance(depth, (DepthMap, RelativeDepthMap)):
        depth = DepthMap(depth)
    if (img.height, img.width) != (depth.height, depth.width):
        raise DimensionMismatch(
            f"image is {img.width}x{img.height} but depth is {depth.width}x{depth.height}"
        )
