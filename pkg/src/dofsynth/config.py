"""Simulation configuration and its YAML loader.

Key schema (all keys optional except ``rng_seed``)::

    rng_seed: 1234                   # required, 64-bit integer
    bit_depth: 10                    # sensor bits, 8..16
    patch_size: 512                  # mosaic extent S of a training patch (even)
    depth_range: [0.1, .inf]         # [z_min, z_max] meters, .inf = infinity
    depth_sampling: uniform          # uniform | full
    iso_range: [100, 3200]
    scaling_strategies: [linear, quadratic, exponential]
    exp_shape_range: [1.0, 4.0]      # shape `a` of the exponential strategy
    psf_aug_sigma_range: [0.0, 0.5]  # kernel pixels
    sensor_size: [4000, 3000]        # full sensor (W, H) in pixels
    exposure_jitter_ev: 0.3
    saturation_range: [0.8, 1.2]
    shard_size: 64                   # samples per shard file
    quantize_target: true
    noise: {shot: 1.0e-4, read0: 1.0e-6, read1: 2.0e-7, iso_base: 100}
    isp:
      wb_gains: [2.0, 1.0, 1.6]
      ccm: [[...], [...], [...]]     # forward camera->RGB, rows sum to 1
      gamma: srgb                    # or a float
      tone_curve: true
      wb_jitter: 0.1
      ccm_jitter: 0.05
      preview_gamma: 2.0

Any key can be overridden through the environment as ``DOFSYNTH_<KEY>``,
with ``__`` separating nested keys (``DOFSYNTH_NOISE__SHOT=2e-4``). Values
are parsed as YAML scalars.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .isp import DEFAULT_CCM, IspParams
from .sensor import NoiseModel

ENV_PREFIX = "DOFSYNTH_"
STRATEGIES = ("linear", "quadratic", "exponential")


@dataclass(frozen=True)
class SimConfig:
    rng_seed: int
    bit_depth: int = 10
    patch_size: int = 512
    depth_range: tuple[float, float] = (0.1, math.inf)
    depth_sampling: str = "uniform"
    iso_range: tuple[float, float] = (100.0, 3200.0)
    scaling_strategies: tuple[str, ...] = STRATEGIES
    exp_shape_range: tuple[float, float] = (1.0, 4.0)
    psf_aug_sigma_range: tuple[float, float] = (0.0, 0.5)
    sensor_size: tuple[int, int] = (4000, 3000)
    exposure_jitter_ev: float = 0.3
    saturation_range: tuple[float, float] = (0.8, 1.2)
    shard_size: int = 64
    quantize_target: bool = True
    noise: NoiseModel = field(default_factory=NoiseModel)
    isp: IspParams = field(default_factory=IspParams)
    wb_jitter: float = 0.1
    ccm_jitter: float = 0.05
    preview_gamma: float = 2.0

    def __post_init__(self):
        z_min, z_max = self.depth_range
        if not 0 < z_min < z_max:
            raise ConfigError(f"depth_range needs 0 < z_min < z_max, got {self.depth_range}")
        if not 8 <= self.bit_depth <= 16:
            raise ConfigError(f"bit_depth must be in [8, 16], got {self.bit_depth}")
        if self.patch_size <= 0 or self.patch_size % 2:
            raise ConfigError(f"patch_size must be even and positive, got {self.patch_size}")
        if not self.scaling_strategies or set(self.scaling_strategies) - set(STRATEGIES):
            raise ConfigError(f"scaling_strategies must be a non-empty subset of {STRATEGIES}")
        if self.depth_sampling not in ("uniform", "full"):
            raise ConfigError(f"depth_sampling must be 'uniform' or 'full', got {self.depth_sampling!r}")
        lo, hi = self.iso_range
        if not 0 < lo <= hi:
            raise ConfigError(f"bad iso_range {self.iso_range}")
        s_lo, s_hi = self.psf_aug_sigma_range
        if not 0 <= s_lo <= s_hi:
            raise ConfigError(f"bad psf_aug_sigma_range {self.psf_aug_sigma_range}")
        if self.shard_size <= 0:
            raise ConfigError("shard_size must be positive")
        n_lo, n_hi = self.noise.iso_range
        if lo < n_lo or hi > n_hi:
            object.__setattr__(self, "noise", dataclasses.replace(self.noise, iso_range=(lo, hi)))

    @property
    def preview_params(self) -> IspParams:
        return dataclasses.replace(self.isp, gamma=self.preview_gamma, tone_curve=False)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "noise":
                v = {"shot": v.shot, "read0": v.read0, "read1": v.read1, "iso_base": v.iso_base}
            elif f.name == "isp":
                v = {
                    "wb_gains": list(v.wb_gains),
                    "ccm": np.asarray(v.ccm).tolist(),
                    "gamma": v.gamma,
                    "tone_curve": v.tone_curve,
                }
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def hash(self) -> str:
        """Stable 16-hex-digit digest of the effective configuration."""
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _env_overrides(prefix=ENV_PREFIX, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out: dict = {}
    for key, raw in environ.items():
        if not key.startswith(prefix):
            continue
        path = key[len(prefix):].lower().split("__")
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = yaml.safe_load(raw)
    return out


def _merge(base: dict, extra: dict) -> dict:
    merged = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = _merge(merged[k], v)
        else:
            merged[k] = v
    return merged


_TUPLE_KEYS = {
    "depth_range", "iso_range", "scaling_strategies", "exp_shape_range",
    "psf_aug_sigma_range", "sensor_size", "saturation_range",
}


def config_from_dict(data: dict) -> SimConfig:
    data = dict(data)
    known = {f.name for f in dataclasses.fields(SimConfig)}
    isp = dict(data.pop("isp", None) or {})
    noise = dict(data.pop("noise", None) or {})
    for key in ("wb_jitter", "ccm_jitter", "preview_gamma"):
        if key in isp:
            data[key] = isp.pop(key)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if data.get("rng_seed") is None:
        raise ConfigError("rng_seed is required")
    kwargs = dict(data)
    for key in _TUPLE_KEYS & set(kwargs):
        cast = {"scaling_strategies": str, "sensor_size": int}.get(key, float)
        kwargs[key] = tuple(cast(v) for v in kwargs[key])
    try:
        kwargs["rng_seed"] = int(kwargs["rng_seed"])
        kwargs["noise"] = NoiseModel(
            **{k: tuple(map(float, v)) if isinstance(v, (list, tuple)) else float(v) for k, v in noise.items()}
        )
        isp_kwargs = {
            "wb_gains": tuple(isp.get("wb_gains", (2.0, 1.0, 1.6))),
            "ccm": np.array(isp.get("ccm", DEFAULT_CCM)),
            "gamma": isp.get("gamma", "srgb"),
            "tone_curve": bool(isp.get("tone_curve", True)),
        }
        extra = set(isp) - set(isp_kwargs)
        if extra:
            raise ConfigError(f"unknown isp keys: {sorted(extra)}")
        kwargs["isp"] = IspParams(**isp_kwargs)
        return SimConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides: dict | None = None, environ=None) -> SimConfig:
    """Load a YAML config, then apply environment and explicit overrides."""
    data: dict = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    data = _merge(data, _env_overrides(environ=environ))
    if overrides:
        data = _merge(data, overrides)
    return config_from_dict(data)
