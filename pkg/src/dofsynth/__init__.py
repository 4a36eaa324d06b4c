"""Depth-varying defocus and aberration dataset synthesis."""

__version__ = "0.1.0"

from .config import SimConfig, load_config
from .core import BayerImage, DepthMap, PlanarImage, RelativeDepthMap, validate_pair
from .dataprep import (
    DepthScaling,
    TrainingSample,
    augment_geometric,
    make_field_map,
    make_iso_channel,
    scale_depth,
    synthesize_sample,
)
from .isp import IspParams, demosaic, mosaic, pack_rggb, process, unpack_rggb, unprocess
from .metrics import noise_stats, psnr, ssim
from .optics import (
    DepthWeights,
    KernelStack,
    PsfGrid,
    augment_psf,
    depth_weights,
    load_psf_grid,
    make_synthetic_grid,
    radial_slice,
    save_psf_grid,
)
from .render import convolve, render_fast, render_oracle, render_tiled
from .sensor import NoiseModel, add_noise, dequantize, noise_params, quantize
from .shards import read_shard, write_shard
