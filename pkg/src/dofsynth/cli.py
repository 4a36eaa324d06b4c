"""Command-line entry point: ``dofsynth <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 validation failure.
Reports are printed as one JSON record per line.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import bench_renderers, validate_suite
from .config import load_config
from .core import DepthMap, PlanarImage, RelativeDepthMap, validate_pair
from .dataprep import sample_rng, sample_scaling, scale_depth
from .errors import DofSynthError
from .io import read_pfm, read_png_rgb, write_pfm, write_png
from .isp import demosaic, mosaic, process, unprocess
from .optics import (
    augment_psf,
    depth_weights,
    load_psf_grid,
    make_synthetic_grid,
    save_psf_grid,
    KernelStack,
    PsfGrid,
)
from .render import render_tiled
from .sensor import add_noise, dequantize, noise_params, quantize
from .shards import generate_shards

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VALIDATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(record: dict, stream=None):
    stream = stream or sys.stdout
    print(json.dumps(record, sort_keys=True, default=float), file=stream)


def _config(args):
    overrides = {"rng_seed": args.seed} if getattr(args, "seed", None) is not None else None
    if args.config is None and overrides is None:
        overrides = {"rng_seed": 0}
    return load_config(args.config, overrides)


def _require_file(path, what):
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} not found: {path}")


# -- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    for path, what in ((args.rgb, "RGB image"), (args.depth, "depth map"), (args.psf, "PSF grid")):
        _require_file(path, what)
    cfg = _config(args)
    grid = load_psf_grid(args.psf)
    rng = sample_rng(cfg.rng_seed, 0)

    rgb = read_png_rgb(args.rgb)
    h, w = (rgb.shape[1] // 2) * 2, (rgb.shape[2] // 2) * 2
    rgb = PlanarImage(rgb[:, :h, :w])
    raw_depth = read_pfm(args.depth)
    raw_depth = raw_depth[0] if raw_depth.ndim == 3 else raw_depth
    raw_depth = raw_depth[:h, :w]
    if args.metric_depth:
        depth = DepthMap(raw_depth)
        scaling = None
    else:
        rel = RelativeDepthMap(raw_depth)
        validate_pair(rgb, rel)
        scaling = sample_scaling(cfg, rng)
        depth = scale_depth(rel, scaling)

    linear = unprocess(rgb, cfg.isp)
    blurred = render_tiled(linear, depth, grid, tile=args.tile)
    clean_raw = mosaic(linear)
    blurred_raw = mosaic(blurred)
    iso = args.iso
    if iso is None:
        lo, hi = cfg.iso_range
        iso = float(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))
    lam_read, lam_shot = noise_params(iso, cfg.noise)
    noisy = quantize(add_noise(blurred_raw, lam_read, lam_shot, rng), cfg.bit_depth)
    preview = process(demosaic(dequantize(noisy)), cfg.preview_params)

    weights = depth_weights(depth, grid.diopters)
    stop_index = weights.low + (1.0 - weights.alpha)
    viz = stop_index / max(grid.n_depths - 1, 1)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "clean_raw": out / "clean_raw.pfm",
        "blurred_raw": out / "blurred_raw.pfm",
        "noisy_raw": out / "noisy_raw.png",
        "preview": out / "preview.png",
        "depth_weights": out / "depth_weights.png",
    }
    write_pfm(files["clean_raw"], clean_raw.data)
    write_pfm(files["blurred_raw"], blurred_raw.data)
    write_png(files["noisy_raw"], noisy.data, bits=16)
    write_png(files["preview"], preview.data, bits=8)
    write_png(files["depth_weights"], viz, bits=8)
    _emit(
        {
            "command": "simulate",
            "iso": iso,
            "depth_scaling": None if scaling is None else scaling.__dict__,
            "files": {k: str(v) for k, v in files.items()},
        }
    )
    return EXIT_OK


def cmd_gen_shards(args) -> int:
    _require_file(args.psf, "PSF grid")
    cfg = _config(args)
    grid = load_psf_grid(args.psf)
    summary = generate_shards(
        args.dataset, grid, cfg, args.out, args.count, args.workers,
        log=lambda msg: print(msg, file=sys.stderr),
    )
    for shard in summary["shards"]:
        _emit({"command": "gen-shards", **shard})
    _emit(
        {
            "command": "gen-shards",
            "requested": args.count,
            "written": summary["written"],
            "skipped": len(summary["skipped"]),
            "config_hash": summary["config_hash"],
        }
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    _require_file(args.psf, "PSF grid")
    cfg = _config(args)
    grid = load_psf_grid(args.psf)
    records = validate_suite(grid, size=args.size, seed=cfg.rng_seed, tol=args.tol)
    failed = 0
    for rec in records:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[rec["passed"]]
        failed += rec["passed"] is False
        _emit({"command": "validate", "status": status, **rec})
    _emit({"command": "validate", "scenes": len(records), "failed": failed})
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_bench(args) -> int:
    _require_file(args.psf, "PSF grid")
    cfg = _config(args)
    grid = load_psf_grid(args.psf)
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--sizes must be a comma-separated list of integers: {args.sizes}") from exc
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    for rec in bench_renderers(grid, sizes, reps=args.reps, seed=cfg.rng_seed):
        _emit({"command": "bench", **rec})
    return EXIT_OK


def cmd_psf_inspect(args) -> int:
    _require_file(args.path, "PSF grid")
    grid = load_psf_grid(args.path)
    sums = grid.kernels.sum(axis=(-2, -1), dtype=np.float64)
    _emit(
        {
            "command": "psf inspect",
            "D": grid.n_depths,
            "R": grid.n_radii,
            "k": grid.kernel_size,
            "camera": grid.camera,
            "f_number": grid.f_number,
            "diopters": grid.diopters.tolist(),
            "radii": grid.radii.tolist(),
            "kernel_sum_min": float(sums.min()),
            "kernel_sum_max": float(sums.max()),
            "kernel_value_min": float(grid.kernels.min()),
        }
    )
    return EXIT_OK


def cmd_psf_augment(args) -> int:
    _require_file(args.path, "PSF grid")
    grid = load_psf_grid(args.path)
    if args.sigma is None:
        cfg = _config(args)
        rng = sample_rng(cfg.rng_seed, 0)
        lo, hi = cfg.psf_aug_sigma_range
        sigma = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    else:
        sigma = args.sigma
    kernels = np.empty_like(grid.kernels)
    for j in range(grid.n_radii):
        stack = KernelStack(grid.diopters, grid.kernels[:, j])
        kernels[:, j] = augment_psf(stack, sigma, sigma_range=(0.0, max(sigma, 0.0))).kernels
    out = PsfGrid(grid.diopters, grid.radii, kernels, grid.camera, grid.f_number)
    save_psf_grid(out, args.out)
    _emit({"command": "psf augment", "sigma": sigma, "out": args.out})
    return EXIT_OK


def cmd_psf_make_synthetic(args) -> int:
    grid = make_synthetic_grid(
        n_depths=args.depth_stops,
        n_radii=args.radial_stops,
        k=args.kernel,
        z_min=args.z_min,
        focus_diopter=args.focus_diopter,
        max_radius=args.max_radius,
        field_gain=args.field_gain,
        chromatic=args.chromatic,
    )
    save_psf_grid(grid, args.out)
    _emit({"command": "psf make-synthetic", "D": grid.n_depths, "R": grid.n_radii, "k": grid.kernel_size, "out": args.out})
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dofsynth", description="Depth-varying defocus dataset synthesis.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, psf=True):
        if psf:
            p.add_argument("--psf", required=True, help="PSF grid file")
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int, help="override rng_seed")

    p = sub.add_parser("simulate", help="render one RGB-D image through the full chain")
    common(p)
    p.add_argument("--rgb", required=True)
    p.add_argument("--depth", required=True, help="relative depth PFM (1 = nearest)")
    p.add_argument("--metric-depth", action="store_true", help="treat --depth as meters")
    p.add_argument("--iso", type=float)
    p.add_argument("--tile", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-shards", help="synthesize training shards")
    common(p)
    p.add_argument("--dataset", required=True, help="directory of PNG + PFM pairs")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_shards)

    p = sub.add_parser("validate", help="fast-vs-oracle renderer agreement")
    common(p)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="time and memory of both renderers")
    common(p)
    p.add_argument("--sizes", default="64,512")
    p.add_argument("--reps", type=int, default=10)
    p.set_defaults(func=cmd_bench)

    psf = sub.add_parser("psf", help="PSF grid tooling")
    psf_sub = psf.add_subparsers(dest="psf_command", required=True, parser_class=_Parser)
    p = psf_sub.add_parser("inspect")
    p.add_argument("path")
    p.set_defaults(func=cmd_psf_inspect)
    p = psf_sub.add_parser("augment")
    p.add_argument("path")
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_psf_augment)
    p = psf_sub.add_parser("make-synthetic")
    p.add_argument("--out", required=True)
    p.add_argument("--depth-stops", type=int, default=20)
    p.add_argument("--radial-stops", type=int, default=20)
    p.add_argument("--kernel", type=int, default=31)
    p.add_argument("--z-min", type=float, default=0.1)
    p.add_argument("--focus-diopter", type=float, default=0.0)
    p.add_argument("--max-radius", type=float)
    p.add_argument("--field-gain", type=float, default=0.3)
    p.add_argument("--chromatic", type=float, default=0.04)
    p.set_defaults(func=cmd_psf_make_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dofsynth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DofSynthError, OSError, ValueError) as exc:
        print(f"dofsynth: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
