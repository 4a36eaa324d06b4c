import json
import subprocess
import sys

import numpy as np
import pytest

from dofsynth.cli import main
from dofsynth.io import read_pfm
from dofsynth.optics import load_psf_grid, make_synthetic_grid, save_psf_grid

from datasets import make_dataset


def _records(capsys):
    return [json.loads(line) for line in capsys.readouterr().out.splitlines() if line.strip()]


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    save_psf_grid(make_synthetic_grid(n_depths=6, n_radii=3, k=9), root / "g.psf")
    make_dataset(root / "data", n=2)
    (root / "c.yaml").write_text("rng_seed: 2\npatch_size: 32\nshard_size: 2\n")
    return root


def _simulate(files, out, *extra):
    return main([
        "simulate", "--psf", str(files / "g.psf"), "--rgb", str(files / "data/img0.png"),
        "--depth", str(files / "data/img0.pfm"), "--out", str(out), "--seed", "4", *extra,
    ])


def test_simulate_writes_five_files(files, tmp_path, capsys):
    assert _simulate(files, tmp_path / "a", "--iso", "800") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["blurred_raw.pfm", "clean_raw.pfm", "depth_weights.png", "noisy_raw.png", "preview.png"]
    rec = _records(capsys)[-1]
    assert rec["iso"] == 800.0
    assert read_pfm(tmp_path / "a" / "clean_raw.pfm").shape == (72, 88)


def test_simulate_deterministic(files, tmp_path):
    assert _simulate(files, tmp_path / "a") == 0
    assert _simulate(files, tmp_path / "b") == 0
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes(), p.name


def test_missing_psf(files, tmp_path, capsys):
    missing = tmp_path / "nope.psf"
    rc = main([
        "simulate", "--psf", str(missing), "--rgb", str(files / "data/img0.png"),
        "--depth", str(files / "data/img0.pfm"), "--out", str(tmp_path / "o"),
    ])
    assert rc != 0
    assert str(missing) in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == 1


def test_gen_shards(files, tmp_path, capsys):
    rc = main([
        "gen-shards", "--psf", str(files / "g.psf"), "--dataset", str(files / "data"),
        "--count", "3", "--out", str(tmp_path / "s"), "--config", str(files / "c.yaml"),
    ])
    assert rc == 0
    recs = _records(capsys)
    assert [r["samples"] for r in recs[:-1]] == [2, 1]
    assert recs[-1]["written"] == 3 and recs[-1]["skipped"] == 0


def test_gen_shards_count_zero(files, tmp_path, capsys):
    rc = main([
        "gen-shards", "--psf", str(files / "g.psf"), "--dataset", str(files / "data"),
        "--count", "0", "--out", str(tmp_path / "s"),
    ])
    assert rc == 0
    assert len(list((tmp_path / "s").glob("*.dshard"))) == 1


def test_validate_passes(files, capsys):
    assert main(["validate", "--psf", str(files / "g.psf"), "--size", "32"]) == 0
    recs = _records(capsys)
    scenes = [r for r in recs if "scene" in r]
    constant = [r for r in scenes if r["kind"] == "constant"]
    assert constant and all(r["status"] == "PASS" and r["max_abs_error"] < 1e-5 for r in constant)
    assert all(r["status"] == "PASS" for r in scenes if r["kind"] == "ramp")
    approx = [r for r in scenes if r["kind"] == "approximation"]
    assert approx[0]["status"] == "INFO" and approx[0]["threshold"] is None
    assert recs[-1]["failed"] == 0


def test_validate_failure_exit_code(files, capsys):
    # a negative tolerance cannot be met, so the suite must report failure
    assert main(["validate", "--psf", str(files / "g.psf"), "--size", "16", "--tol", "-1"]) == 3


def test_bench_small(files, capsys):
    assert main(["bench", "--psf", str(files / "g.psf"), "--sizes", "32", "--reps", "1"]) == 0
    rec = _records(capsys)[0]
    assert rec["size"] == 32 and rec["speedup"] > 0
    assert main(["bench", "--psf", str(files / "g.psf"), "--sizes", "x"]) == 1


def test_psf_inspect(files, capsys):
    assert main(["psf", "inspect", str(files / "g.psf")]) == 0
    rec = _records(capsys)[0]
    assert (rec["D"], rec["R"], rec["k"]) == (6, 3, 9)
    assert abs(rec["kernel_sum_min"] - 1) < 1e-5 and abs(rec["kernel_sum_max"] - 1) < 1e-5


def test_psf_augment_sigma_zero_identical(files, tmp_path):
    out = tmp_path / "a.psf"
    assert main(["psf", "augment", str(files / "g.psf"), "--out", str(out), "--sigma", "0"]) == 0
    assert out.read_bytes() == (files / "g.psf").read_bytes()


def test_psf_augment_blurs(files, tmp_path):
    out = tmp_path / "a.psf"
    assert main(["psf", "augment", str(files / "g.psf"), "--out", str(out), "--sigma", "1.0"]) == 0
    g = load_psf_grid(out)
    c = g.kernel_size // 2
    assert (g.kernels[-1, :, :, c, c] < 1.0).all()


def test_psf_make_synthetic(tmp_path, capsys):
    out = tmp_path / "s.psf"
    assert main(["psf", "make-synthetic", "--out", str(out), "--depth-stops", "5", "--radial-stops", "2", "--kernel", "11"]) == 0
    g = load_psf_grid(out)
    assert g.diopters[-1] == 0.0
    c = 5
    assert (g.kernels[-1, :, :, c, c] == 1.0).all()
    assert np.count_nonzero(g.kernels[-1]) == 2 * 3


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "dofsynth", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
