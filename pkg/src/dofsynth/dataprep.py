"""Training-sample synthesis: depth scaling, augmentation, auxiliary channels.

A sample is a 6-channel network input (4 packed RGGB planes of the
blurred, noisy, quantized mosaic plus an ISO plane and a field-radius
plane) and a 4-channel clean packed RGGB target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SimConfig
from .core import PlanarImage, RelativeDepthMap, DepthMap, validate_pair
from .errors import CropLargerThanImage, DegenerateRange, PatchOutOfBounds, ValidationError
from .io import read_pfm, read_png_rgb
from .isp import mosaic, pack_rggb, unprocess
from .optics import PsfGrid, augment_psf, depth_weights, radial_slice
from .render import render_fast
from .sensor import add_noise, dequantize, noise_params, quantize

ISO_SCALE = 0.001
INPUT_CHANNELS = 6
TARGET_CHANNELS = 4
_LUMA = np.array([0.2126, 0.7152, 0.0722])


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-style generator keyed on (seed, sample index)."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)])
    return np.random.Generator(np.random.Philox(ss))


# -- depth scaling --------------------------------------------------------------

@dataclass(frozen=True)
class DepthScaling:
    """Relative-to-metric depth mapping, performed in diopter space.

    ``shape`` is the exponent ``a`` of the exponential strategy; it is drawn
    at scaling time when left as None.
    """

    strategy: str
    near: float
    far: float = math.inf
    shape: float | None = None

    def __post_init__(self):
        if self.strategy not in ("linear", "quadratic", "exponential"):
            raise ValidationError(f"unknown strategy {self.strategy!r}")
        if not 0 < self.near < self.far:
            raise DegenerateRange(f"need 0 < near < far, got near={self.near}, far={self.far}")


def _profile(t, strategy, a):
    if strategy == "linear":
        return t
    if strategy == "quadratic":
        return t * t
    return np.expm1(a * t) / np.expm1(a)


def scale_depth(rel: RelativeDepthMap, scaling: DepthScaling, rng=None, shape_range=(1.0, 4.0)) -> DepthMap:
    """Map relative depth (1 = nearest) to metric depth in [near, far]."""
    if not isinstance(rel, RelativeDepthMap):
        rel = RelativeDepthMap(rel)
    a = scaling.shape
    if scaling.strategy == "exponential" and a is None:
        if rng is None:
            raise ValidationError("exponential scaling needs a shape or an rng")
        a = float(rng.uniform(*shape_range))
    d_near = 1.0 / scaling.near
    d_far = 0.0 if math.isinf(scaling.far) else 1.0 / scaling.far
    d = d_far + (d_near - d_far) * _profile(rel.values, scaling.strategy, a)
    with np.errstate(divide="ignore", over="ignore"):
        z = np.where(d > 0, 1.0 / d, np.inf)
    return DepthMap(np.clip(z, scaling.near, scaling.far))


def sample_scaling(cfg: SimConfig, rng: np.random.Generator) -> DepthScaling:
    """Pick a strategy uniformly and a depth span uniformly in diopters.

    The exponential shape is drawn here too, so the result fully records the
    mapping.
    """
    strategy = cfg.scaling_strategies[int(rng.integers(len(cfg.scaling_strategies)))]
    z_min, z_max = cfg.depth_range
    d_hi = 1.0 / z_min
    d_lo = 0.0 if math.isinf(z_max) else 1.0 / z_max
    if cfg.depth_sampling == "uniform":
        a, b = np.sort(rng.uniform(d_lo, d_hi, size=2))
        if b - a < 1e-9:
            a, b = d_lo, d_hi
        d_lo, d_hi = float(a), float(b)
    near = 1.0 / d_hi
    far = math.inf if d_lo == 0.0 else 1.0 / d_lo
    shape = float(rng.uniform(*cfg.exp_shape_range)) if strategy == "exponential" else None
    return DepthScaling(strategy, near, far, shape)


# -- auxiliary channels ---------------------------------------------------------------

def field_radius(x, y, sensor_size) -> np.ndarray:
    """Distance from the sensor centre over the centre-to-corner distance."""
    w, h = sensor_size
    cx, cy = w / 2.0, h / 2.0
    r = np.hypot(np.asarray(x, dtype=np.float64) - cx, np.asarray(y, dtype=np.float64) - cy)
    return np.clip(r / math.hypot(cx, cy), 0.0, 1.0)


def make_field_map(patch_origin, patch_size, full_sensor, step: int = 1) -> PlanarImage:
    """Normalized radial position of every pixel of a patch.

    ``step`` subsamples the patch (e.g. 2 for the packed-RGGB resolution);
    each value is taken at the centre of its ``step x step`` cell.
    """
    x0, y0 = patch_origin
    pw, ph = (patch_size, patch_size) if np.isscalar(patch_size) else patch_size
    sw, sh = full_sensor
    if x0 < 0 or y0 < 0 or x0 + pw > sw or y0 + ph > sh:
        raise PatchOutOfBounds(f"patch {pw}x{ph} at ({x0}, {y0}) leaves the {sw}x{sh} sensor")
    off = (step - 1) / 2.0
    xs = x0 + off + step * np.arange(pw // step)
    ys = y0 + off + step * np.arange(ph // step)
    return PlanarImage(field_radius(xs[None, :], ys[:, None], full_sensor)[None])


def make_iso_channel(iso: float, dims) -> PlanarImage:
    if iso <= 0:
        raise ValidationError(f"ISO must be positive, got {iso}")
    h, w = dims
    return PlanarImage(np.full((1, h, w), iso * ISO_SCALE, dtype=np.float32))


# -- augmentation ---------------------------------------------------------------

@dataclass(frozen=True)
class AugmentDraw:
    """One sampled geometric + pixel augmentation."""

    flip_h: bool = False
    flip_v: bool = False
    rot90: int = 0
    crop: tuple[int, int, int, int] | None = None  # (y0, x0, h, w), after rotation
    ev: float = 0.0
    saturation: float = 1.0


def draw_augmentation(rng, shape, crop_size=None, ev_range=0.3, saturation_range=(0.8, 1.2)) -> AugmentDraw:
    h, w = shape
    flip_h, flip_v = (bool(v) for v in rng.integers(0, 2, size=2))
    rot = int(rng.integers(0, 4))
    if rot % 2:
        h, w = w, h
    crop = None
    if crop_size is not None:
        ch, cw = (crop_size, crop_size) if np.isscalar(crop_size) else crop_size
        if ch > h or cw > w:
            raise CropLargerThanImage(f"crop {cw}x{ch} exceeds image {w}x{h}")
        crop = (int(rng.integers(0, h - ch + 1)), int(rng.integers(0, w - cw + 1)), ch, cw)
    ev = float(rng.uniform(-ev_range, ev_range)) if ev_range > 0 else 0.0
    lo, hi = saturation_range
    sat = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    return AugmentDraw(flip_h, flip_v, rot, crop, ev, sat)


def _geometric(x: np.ndarray, draw: AugmentDraw) -> np.ndarray:
    # x: (..., H, W)
    if draw.flip_h:
        x = x[..., :, ::-1]
    if draw.flip_v:
        x = x[..., ::-1, :]
    x = np.rot90(x, draw.rot90, axes=(-2, -1))
    if draw.crop is not None:
        y0, x0, ch, cw = draw.crop
        if y0 + ch > x.shape[-2] or x0 + cw > x.shape[-1]:
            raise CropLargerThanImage(f"crop {draw.crop} does not fit {x.shape[-2:]}")
        x = x[..., y0 : y0 + ch, x0 : x0 + cw]
    return np.ascontiguousarray(x)


def apply_augmentation(draw: AugmentDraw, rgb: PlanarImage, rel_depth: RelativeDepthMap):
    rgb_data = _geometric(rgb.data, draw)
    depth = _geometric(rel_depth.values, draw)
    if draw.ev != 0.0 or draw.saturation != 1.0:
        x = rgb_data.astype(np.float64) * 2.0**draw.ev
        luma = np.tensordot(_LUMA, x, axes=1)[None]
        x = luma + draw.saturation * (x - luma)
        rgb_data = np.clip(x, 0.0, 1.0)
    return PlanarImage(rgb_data), RelativeDepthMap(depth)


def augment_geometric(rgb: PlanarImage, rel_depth: RelativeDepthMap, rng, crop_size=None, ev_range=0.3, saturation_range=(0.8, 1.2)):
    """Random flips, 90-degree rotations and crop shared by RGB and depth,
    plus exposure and saturation jitter on RGB only."""
    validate_pair(rgb, rel_depth)
    draw = draw_augmentation(rng, (rgb.height, rgb.width), crop_size, ev_range, saturation_range)
    return apply_augmentation(draw, rgb, rel_depth)


# -- samples ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrainingSample:
    input: np.ndarray   # (6, S/2, S/2)
    target: np.ndarray  # (4, S/2, S/2)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        inp = np.asarray(self.input, dtype=np.float32)
        tgt = np.asarray(self.target, dtype=np.float32)
        if inp.ndim != 3 or inp.shape[0] != INPUT_CHANNELS:
            raise ValidationError(f"input must be (6, h, w), got {inp.shape}")
        if tgt.ndim != 3 or tgt.shape[0] != TARGET_CHANNELS:
            raise ValidationError(f"target must be (4, h, w), got {tgt.shape}")
        if inp.shape[1:] != tgt.shape[1:]:
            raise ValidationError("input and target spatial size differ")
        iso = inp[4]
        if (iso != iso.flat[0]).any():
            raise ValidationError("ISO channel must be constant")
        if inp[5].min() < 0 or inp[5].max() > 1:
            raise ValidationError("field channel must lie in [0, 1]")
        for name, arr in (("input", inp), ("target", tgt)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def synthesize_sample(
    rgb: PlanarImage,
    rel_depth: RelativeDepthMap,
    grid: PsfGrid,
    cfg: SimConfig,
    rng: np.random.Generator,
    source_id: str = "",
    seed=None,
) -> TrainingSample:
    """Run the full simulation chain on one RGB-D image.

    augment -> place patch on sensor -> scale depth -> unprocess ->
    PSFs at the patch-centre radius -> PSF blur augmentation -> layered
    rendering -> mosaic -> noise at a sampled ISO -> quantize ->
    dequantize -> pack, with ISO and field planes appended.
    """
    if not isinstance(rgb, PlanarImage):
        rgb = PlanarImage(rgb)
    if not isinstance(rel_depth, RelativeDepthMap):
        rel_depth = RelativeDepthMap(rel_depth)
    s = cfg.patch_size
    if s < 2 * grid.kernel_size:
        raise ValidationError(f"patch_size {s} must be >= 2 * kernel size {grid.kernel_size}")
    validate_pair(rgb, rel_depth)

    draw = draw_augmentation(
        rng, (rgb.height, rgb.width), s, cfg.exposure_jitter_ev, cfg.saturation_range
    )
    rgb_p, rel_p = apply_augmentation(draw, rgb, rel_depth)

    sw, sh = cfg.sensor_size
    if s > sw or s > sh:
        raise PatchOutOfBounds(f"patch {s} does not fit the {sw}x{sh} sensor")
    x0 = 2 * int(rng.integers(0, (sw - s) // 2 + 1))
    y0 = 2 * int(rng.integers(0, (sh - s) // 2 + 1))
    radius = float(field_radius(x0 + (s - 1) / 2.0, y0 + (s - 1) / 2.0, cfg.sensor_size))

    scaling = sample_scaling(cfg, rng)
    depth = scale_depth(rel_p, scaling)
    linear = unprocess(rgb_p, cfg.isp, rng, cfg.wb_jitter, cfg.ccm_jitter)

    s_lo, s_hi = cfg.psf_aug_sigma_range
    sigma = float(rng.uniform(s_lo, s_hi)) if s_hi > s_lo else float(s_lo)
    stack = augment_psf(radial_slice(grid, radius), sigma, sigma_range=cfg.psf_aug_sigma_range)
    blurred = render_fast(linear, depth, stack, depth_weights(depth, stack.diopters))

    lo, hi = cfg.iso_range
    iso = float(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))
    iso = min(max(iso, lo), hi)
    lam_read, lam_shot = noise_params(iso, cfg.noise)
    noisy = add_noise(mosaic(blurred), lam_read, lam_shot, rng)
    observed = pack_rggb(dequantize(quantize(noisy, cfg.bit_depth)))

    clean = mosaic(linear)
    if cfg.quantize_target:
        clean = dequantize(quantize(clean, cfg.bit_depth))
    target = pack_rggb(clean)

    hp, wp = observed.height, observed.width
    iso_plane = make_iso_channel(iso, (hp, wp)).data
    field_plane = make_field_map((x0, y0), s, cfg.sensor_size, step=2).data
    meta = {
        "iso": iso,
        "field_radius": radius,
        "patch_origin": [x0, y0],
        "depth_scaling": {
            "strategy": scaling.strategy,
            "near": scaling.near,
            "far": scaling.far,
            "shape": scaling.shape,
        },
        "psf_sigma": sigma,
        "source_id": source_id,
        "rng_seed": seed,
    }
    return TrainingSample(np.concatenate([observed.data, iso_plane, field_plane]), target.data, meta)


# -- dataset discovery ---------------------------------------------------------------

def find_pairs(dataset_dir) -> list[tuple[str, Path, Path]]:
    """RGB PNGs with a sibling relative-depth PFM of the same stem, sorted by stem."""
    root = Path(dataset_dir)
    pairs = []
    for png in sorted(root.glob("*.png")):
        pfm = png.with_suffix(".pfm")
        if pfm.exists():
            pairs.append((png.stem, png, pfm))
    return pairs


def load_pair(png_path, pfm_path) -> tuple[PlanarImage, RelativeDepthMap]:
    rgb = PlanarImage(read_png_rgb(png_path))
    depth = read_pfm(pfm_path)
    if depth.ndim == 3:
        depth = depth[0]
    rel = RelativeDepthMap(depth)
    validate_pair(rgb, rel)
    return rgb, rel
