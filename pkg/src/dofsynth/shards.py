"""Binary shard files bundling many training samples.

Layout, all little-endian::

    b"DSHARD1\\0"                 8-byte magic
    uint32 count                 number of samples
    uint32 patch                 packed spatial size (S/2)
    uint16 input_channels        6
    uint16 target_channels       4
    32 bytes ascii config hash   zero padded
    then per sample:
        float32[input_channels * patch * patch]
        float32[target_channels * patch * patch]
        uint32 meta_length, utf-8 JSON metadata (sorted keys)
"""

from __future__ import annotations

import json
import multiprocessing
import struct
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .dataprep import (
    INPUT_CHANNELS,
    TARGET_CHANNELS,
    TrainingSample,
    find_pairs,
    load_pair,
    sample_rng,
    synthesize_sample,
)
from .errors import ConfigHashMismatch, DofSynthError, EmptyDataset, MalformedShard

MAGIC = b"DSHARD1\0"
_HEADER = struct.Struct("<8sIIHH32s")


def _encode_meta(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, allow_nan=True).encode("utf-8")


def shard_bytes(samples, config_hash: str = "") -> bytes:
    samples = list(samples)
    patch = samples[0].input.shape[1] if samples else 0
    for s in samples:
        if s.input.shape[1:] != (patch, patch):
            raise ValueError("all samples in a shard must share one square patch size")
    chunks = [
        _HEADER.pack(
            MAGIC, len(samples), patch, INPUT_CHANNELS, TARGET_CHANNELS,
            config_hash.encode("ascii")[:32],
        )
    ]
    for s in samples:
        chunks.append(np.ascontiguousarray(s.input, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(s.target, dtype="<f4").tobytes())
        meta = _encode_meta(s.meta)
        chunks.append(struct.pack("<I", len(meta)))
        chunks.append(meta)
    return b"".join(chunks)


def write_shard(samples, path, config_hash: str = "") -> None:
    with open(path, "wb") as fh:
        fh.write(shard_bytes(samples, config_hash))


def read_shard_header(raw: bytes) -> dict:
    if len(raw) < _HEADER.size:
        raise MalformedShard("file shorter than the shard header")
    magic, count, patch, c_in, c_out, chash = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MalformedShard("bad shard magic")
    return {
        "count": count,
        "patch": patch,
        "input_channels": c_in,
        "target_channels": c_out,
        "config_hash": chash.rstrip(b"\0").decode("ascii"),
    }


def read_shard(path, expected_hash: str | None = None) -> list[TrainingSample]:
    """Load every sample of a shard.

    A config hash differing from ``expected_hash`` only warns.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    head = read_shard_header(raw)
    if expected_hash is not None and head["config_hash"] != expected_hash:
        warnings.warn(
            f"{path}: written with config {head['config_hash']}, expected {expected_hash}",
            ConfigHashMismatch,
            stacklevel=2,
        )
    p = head["patch"]
    n_in = head["input_channels"] * p * p * 4
    n_out = head["target_channels"] * p * p * 4
    pos = _HEADER.size
    samples = []
    for i in range(head["count"]):
        if pos + n_in + n_out + 4 > len(raw):
            raise MalformedShard(f"{path}: truncated in sample {i}")
        inp = np.frombuffer(raw, "<f4", head["input_channels"] * p * p, pos)
        pos += n_in
        tgt = np.frombuffer(raw, "<f4", head["target_channels"] * p * p, pos)
        pos += n_out
        (mlen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        if pos + mlen > len(raw):
            raise MalformedShard(f"{path}: truncated metadata in sample {i}")
        try:
            meta = json.loads(raw[pos : pos + mlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedShard(f"{path}: corrupt metadata in sample {i}") from exc
        pos += mlen
        samples.append(
            TrainingSample(
                inp.reshape(head["input_channels"], p, p),
                tgt.reshape(head["target_channels"], p, p),
                meta,
            )
        )
    if pos != len(raw):
        raise MalformedShard(f"{path}: {len(raw) - pos} trailing bytes")
    return samples


# -- parallel generation ---------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(pairs, grid, cfg):
    _WORKER.clear()
    _WORKER.update(pairs=pairs, grid=grid, cfg=cfg, cache={})


def _load(stem, png, pfm):
    cache = _WORKER["cache"]
    if stem not in cache:
        try:
            cache[stem] = load_pair(png, pfm)
        except (DofSynthError, ValueError, OSError) as exc:
            cache[stem] = exc
    return cache[stem]


def _make_sample(index):
    pairs, grid, cfg = _WORKER["pairs"], _WORKER["grid"], _WORKER["cfg"]
    stem, png, pfm = pairs[index % len(pairs)]
    loaded = _load(stem, png, pfm)
    if isinstance(loaded, Exception):
        return index, None, f"sample {index}: skipping {stem}: {loaded}"
    rgb, rel = loaded
    rng = sample_rng(cfg.rng_seed, index)
    try:
        sample = synthesize_sample(rgb, rel, grid, cfg, rng, source_id=stem, seed=cfg.rng_seed)
    except DofSynthError as exc:
        return index, None, f"sample {index}: skipping {stem}: {exc}"
    sample = TrainingSample(sample.input, sample.target, {**sample.meta, "sample_index": index})
    return index, sample, None


def generate_samples(pairs, grid, cfg, count: int, workers: int = 1):
    """Yield ``(index, sample | None, warning | None)`` in index order.

    Every sample draws from its own generator keyed on (seed, index), so
    the output does not depend on ``workers``.
    """
    if workers <= 1:
        _init_worker(pairs, grid, cfg)
        for i in range(count):
            yield _make_sample(i)
        return
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(workers, mp_context=ctx, initializer=_init_worker, initargs=(pairs, grid, cfg)) as pool:
        yield from pool.map(_make_sample, range(count), chunksize=max(1, count // (4 * workers)))


def generate_shards(dataset_dir, grid, cfg, out_dir, count: int, workers: int = 1, log=None):
    """Synthesize ``count`` samples from a dataset directory into shard files.

    Unreadable image/depth pairs are skipped with a warning. Returns a
    summary dict with the shard paths, the number of samples written and the
    skipped indices.
    """
    out_dir = Path(out_dir)
    pairs = find_pairs(dataset_dir)
    if count > 0 and not pairs:
        raise EmptyDataset(f"no PNG + PFM pairs found in {dataset_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = cfg.hash()
    shards, batch, skipped = [], [], []

    def flush():
        path = out_dir / f"shard_{len(shards):05d}.dshard"
        write_shard(batch, path, chash)
        shards.append({"path": str(path), "samples": len(batch), "config_hash": chash})
        if log:
            log(f"{path} samples={len(batch)} config_hash={chash}")
        batch.clear()

    for index, sample, warning in generate_samples(pairs, grid, cfg, count, workers):
        if sample is None:
            skipped.append(index)
            warnings.warn(warning, RuntimeWarning, stacklevel=2)
            if log:
                log(f"warning: {warning}")
            continue
        batch.append(sample)
        if len(batch) == cfg.shard_size:
            flush()
    if batch or not shards:
        flush()
    return {
        "shards": shards,
        "written": sum(s["samples"] for s in shards),
        "skipped": skipped,
        "config_hash": chash,
    }
