"""Invertible camera ISP: unprocessing RGB to linear RAW and back.

Forward order (``process``): white balance, colour correction, gamma
encode, tone curve. ``unprocess`` applies the inverse stages in reverse.
Every stage clamps to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .core import LINEAR, BayerImage, PlanarImage
from .errors import OddDimensions, QuantizedDomain, SingularCcm, ValidationError

# Row-stochastic rgb->camera mixing; its inverse is the default forward CCM.
DEFAULT_RGB2CAM = np.array(
    [
        [0.80, 0.15, 0.05],
        [0.10, 0.80, 0.10],
        [0.05, 0.15, 0.80],
    ]
)
DEFAULT_CCM = np.linalg.inv(DEFAULT_RGB2CAM)


@dataclass(frozen=True, eq=False)
class IspParams:
    """Parameters of the invertible ISP.

    Attributes:
        wb_gains: (r, g, b) white-balance gains applied by ``process``.
        ccm: forward 3x3 camera->RGB colour-correction matrix, rows sum to 1.
        gamma: ``"srgb"`` for the piecewise sRGB transfer curve, or a positive
            float for a pure power law (encode exponent ``1/gamma``).
        tone_curve: enable the smoothstep S-curve stage.
    """

    wb_gains: tuple[float, float, float] = (2.0, 1.0, 1.6)
    ccm: np.ndarray = field(default_factory=lambda: DEFAULT_CCM.copy())
    gamma: float | str = "srgb"
    tone_curve: bool = True

    def __post_init__(self):
        gains = tuple(float(g) for g in self.wb_gains)
        if len(gains) != 3 or min(gains) <= 0 or not np.all(np.isfinite(gains)):
            raise ValidationError(f"white-balance gains must be 3 positive reals, got {self.wb_gains}")
        ccm = np.array(self.ccm, dtype=np.float64)
        if ccm.shape != (3, 3) or not np.isfinite(ccm).all():
            raise ValidationError("ccm must be a finite 3x3 matrix")
        if np.abs(ccm.sum(axis=1) - 1.0).max() > 1e-6:
            raise ValidationError(f"ccm rows must sum to 1, got {ccm.sum(axis=1)}")
        if not np.isfinite(np.linalg.cond(ccm)) or np.linalg.cond(ccm) > 1e12:
            raise SingularCcm("ccm is not invertible")
        if isinstance(self.gamma, str):
            if self.gamma != "srgb":
                raise ValidationError(f"gamma must be 'srgb' or a positive float, got {self.gamma!r}")
        elif not (float(self.gamma) > 0):
            raise ValidationError(f"gamma must be positive, got {self.gamma}")
        ccm.setflags(write=False)
        object.__setattr__(self, "wb_gains", gains)
        object.__setattr__(self, "ccm", ccm)

    @classmethod
    def identity(cls, gamma: float | str = 1.0) -> "IspParams":
        return cls(wb_gains=(1.0, 1.0, 1.0), ccm=np.eye(3), gamma=gamma, tone_curve=False)


PREVIEW_PARAMS = IspParams(gamma=2.0, tone_curve=False)


def jitter_params(params: IspParams, rng: np.random.Generator, wb_jitter=0.1, ccm_jitter=0.05) -> IspParams:
    """Randomly perturb white balance and colour matrix for augmentation.

    Red and blue gains are scaled by ``1 + U(-wb_jitter, wb_jitter)``. The
    inverse CCM is perturbed additively, clipped non-negative and row
    normalized, so unprocessing still maps the unit cube into itself.
    """
    gains = np.array(params.wb_gains)
    gains[[0, 2]] *= 1.0 + rng.uniform(-wb_jitter, wb_jitter, size=2)
    rgb2cam = np.linalg.inv(params.ccm)
    rgb2cam = rgb2cam + rng.uniform(-ccm_jitter, ccm_jitter, size=(3, 3))
    rgb2cam = np.clip(rgb2cam, 0.0, None)
    rgb2cam /= rgb2cam.sum(axis=1, keepdims=True)
    ccm = np.linalg.inv(rgb2cam)
    ccm /= ccm.sum(axis=1, keepdims=True)
    return replace(params, wb_gains=tuple(gains), ccm=ccm)


# -- scalar stages ----------------------------------------------------------

def smoothstep(x):
    return 3.0 * x**2 - 2.0 * x**3


def inverse_smoothstep(y, tol=1e-8):
    """Invert the smoothstep curve on [0, 1] by vectorized bisection."""
    y = np.asarray(y, dtype=np.float64)
    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    n_iter = int(np.ceil(np.log2(1.0 / tol))) + 1
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = smoothstep(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    x = 0.5 * (lo + hi)
    # keep the curve's fixed points exact
    return np.where(y <= 0.0, 0.0, np.where(y >= 1.0, 1.0, x))


def srgb_to_linear(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.maximum(x, 0.0031308) ** (1 / 2.4) - 0.055)


def _gamma_decode(x, gamma):
    if gamma == "srgb":
        return srgb_to_linear(x)
    return x ** float(gamma)


def _gamma_encode(x, gamma):
    if gamma == "srgb":
        return linear_to_srgb(x)
    return x ** (1.0 / float(gamma))


def _apply_matrix(x, m):
    # x: (3, H, W)
    return np.einsum("ij,jhw->ihw", m, x)


def _clamp(x):
    return np.clip(x, 0.0, 1.0)


def _rgb(img: PlanarImage) -> np.ndarray:
    if not isinstance(img, PlanarImage):
        img = PlanarImage(img)
    if img.channels != 3:
        raise ValidationError(f"expected a 3-channel image, got {img.channels}")
    return img.data.astype(np.float64)


def unprocess(rgb: PlanarImage, params: IspParams = IspParams(), rng=None, wb_jitter=0.1, ccm_jitter=0.05) -> PlanarImage:
    """Map a display-referred RGB image into linear camera RAW space.

    When ``rng`` is given the parameters are jittered first (see
    :func:`jitter_params`).
    """
    if rng is not None:
        params = jitter_params(params, rng, wb_jitter, ccm_jitter)
    x = _clamp(_rgb(rgb))
    if params.tone_curve:
        x = _clamp(inverse_smoothstep(x))
    x = _clamp(_gamma_decode(x, params.gamma))
    x = _clamp(_apply_matrix(x, np.linalg.inv(params.ccm)))
    x = _clamp(x / np.asarray(params.wb_gains)[:, None, None])
    return PlanarImage(x)


def process(raw_rgb: PlanarImage, params: IspParams = PREVIEW_PARAMS) -> PlanarImage:
    """Forward ISP from linear RAW RGB to display-referred RGB."""
    x = _clamp(_rgb(raw_rgb))
    x = _clamp(x * np.asarray(params.wb_gains)[:, None, None])
    x = _clamp(_apply_matrix(x, params.ccm))
    x = _clamp(_gamma_encode(x, params.gamma))
    if params.tone_curve:
        x = _clamp(smoothstep(x))
    return PlanarImage(x)


# -- Bayer handling --------------------------------------------------------

# channel index at each site of the 2x2 RGGB cell
_CFA = np.array([[0, 1], [1, 2]])


def _cfa_masks(h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    idx = _CFA[yy % 2, xx % 2]
    return np.stack([idx == c for c in range(3)])


def mosaic(linear_rgb: PlanarImage) -> BayerImage:
    """Sample an RGB image with the RGGB pattern."""
    x = _rgb(linear_rgb)
    _, h, w = x.shape
    if h % 2 or w % 2:
        raise OddDimensions(f"mosaic needs even dimensions, got {w}x{h}")
    plane = np.empty((h, w), dtype=np.float32)
    plane[0::2, 0::2] = x[0, 0::2, 0::2]
    plane[0::2, 1::2] = x[1, 0::2, 1::2]
    plane[1::2, 0::2] = x[1, 1::2, 0::2]
    plane[1::2, 1::2] = x[2, 1::2, 1::2]
    return BayerImage(plane)


_K_RB = np.array([[0.25, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.25]])
_K_G = np.array([[0.0, 0.25, 0.0], [0.25, 1.0, 0.25], [0.0, 0.25, 0.0]])


def demosaic(bayer: BayerImage) -> PlanarImage:
    """Bilinear demosaic by normalized convolution.

    Missing samples are the weighted mean of the available same-colour
    neighbours, so constant mosaics reconstruct exactly, borders included.
    """
    if bayer.domain != LINEAR:
        raise QuantizedDomain("demosaic expects a linear-domain mosaic")
    plane = bayer.data.astype(np.float64)
    masks = _cfa_masks(*plane.shape)
    out = np.empty((3,) + plane.shape)
    for c, kernel in enumerate((_K_RB, _K_G, _K_RB)):
        m = masks[c].astype(np.float64)
        num = ndimage.convolve(plane * m, kernel, mode="constant")
        den = ndimage.convolve(m, kernel, mode="constant")
        out[c] = num / den
    return PlanarImage(out)


def pack_rggb(bayer: BayerImage) -> PlanarImage:
    """Rearrange a mosaic into four half-resolution planes (R, G1, G2, B)."""
    p = bayer.data
    packed = np.stack([p[0::2, 0::2], p[0::2, 1::2], p[1::2, 0::2], p[1::2, 1::2]])
    return PlanarImage(packed.astype(np.float32))


def unpack_rggb(packed: PlanarImage, domain: str = LINEAR, bit_depth: int | None = None) -> BayerImage:
    if packed.channels != 4:
        raise ValidationError(f"expected 4 packed channels, got {packed.channels}")
    _, h, w = packed.shape
    plane = np.empty((2 * h, 2 * w), dtype=packed.data.dtype)
    plane[0::2, 0::2] = packed.data[0]
    plane[0::2, 1::2] = packed.data[1]
    plane[1::2, 0::2] = packed.data[2]
    plane[1::2, 1::2] = packed.data[3]
    return BayerImage(plane, domain=domain, bit_depth=bit_depth)
