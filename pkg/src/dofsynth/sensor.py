"""ISO-dependent sensor noise and b-bit quantization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LINEAR, QUANTIZED, BayerImage
from .errors import IsoOutOfRange, NegativeVariance, QuantizedDomain, ValidationError


@dataclass(frozen=True)
class NoiseModel:
    """Heteroscedastic Gaussian noise parameterized by ISO.

    With gain ``g = iso / iso_base``: ``shot variance = shot * g`` and
    ``read variance = read0 + read1 * g**2``, in normalized-signal units.
    The default coefficients are placeholders, not a calibrated sensor.
    """

    shot: float = 1e-4
    read0: float = 1e-6
    read1: float = 2e-7
    iso_base: float = 100.0
    iso_range: tuple[float, float] = (50.0, 12800.0)

    def __post_init__(self):
        if self.shot < 0 or self.read0 < 0 or self.read1 < 0:
            raise ValidationError("noise coefficients must be non-negative")
        if self.iso_base <= 0:
            raise ValidationError("iso_base must be positive")
        lo, hi = self.iso_range
        if not 0 < lo <= hi:
            raise ValidationError(f"bad iso_range {self.iso_range}")
        g = hi / self.iso_base
        if not np.isfinite(self.read0 + self.read1 * g * g) or not np.isfinite(self.shot * g):
            raise ValidationError("noise variances overflow within iso_range")


def noise_params(iso: float, model: NoiseModel = NoiseModel()) -> tuple[float, float]:
    """Return ``(read_variance, shot_variance)`` at the given ISO."""
    lo, hi = model.iso_range
    if not lo <= iso <= hi:
        raise IsoOutOfRange(f"ISO {iso} outside [{lo}, {hi}]")
    g = iso / model.iso_base
    return model.read0 + model.read1 * g * g, model.shot * g


def add_noise(raw: BayerImage, lam_read: float, lam_shot: float, rng: np.random.Generator) -> BayerImage:
    """Draw ``N(I, lam_read + lam_shot * I)`` per pixel, clamped to [0, 1]."""
    if raw.domain != LINEAR:
        raise QuantizedDomain("noise is added in the linear domain")
    if lam_read < 0 or lam_shot < 0:
        raise NegativeVariance(f"variances must be >= 0, got read={lam_read}, shot={lam_shot}")
    if lam_read == 0 and lam_shot == 0:
        return BayerImage(raw.data.copy())
    signal = raw.data.astype(np.float64)
    std = np.sqrt(lam_read + lam_shot * np.clip(signal, 0.0, None))
    noisy = signal + std * rng.standard_normal(signal.shape)
    return BayerImage(np.clip(noisy, 0.0, 1.0))


def quantize(raw: BayerImage, bits: int = 10) -> BayerImage:
    """Scale to ``2**bits - 1`` full scale, clip, round half to even."""
    if raw.domain != LINEAR:
        raise QuantizedDomain("mosaic is already quantized")
    top = 2**bits - 1
    scaled = np.clip(raw.data.astype(np.float64) * top, 0.0, top)
    return BayerImage(np.rint(scaled).astype(np.uint16), domain=QUANTIZED, bit_depth=bits)


def dequantize(raw: BayerImage, bits: int | None = None) -> BayerImage:
    if raw.domain != QUANTIZED:
        raise ValidationError("dequantize expects a quantized mosaic")
    bits = raw.bit_depth if bits is None else bits
    top = 2**bits - 1
    return BayerImage((raw.data.astype(np.float64) / top).astype(np.float32))
