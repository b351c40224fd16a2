"""Command-line interface contracts."""

import json

import numpy as np
import pytest

from pgdpo.cli import main
from pgdpo.market import load_market


def run_cli(*argv):
    return main(list(argv))


def test_generate_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run_cli("generate", "--n", "10", "--seed", "42", "--out", str(a)) == 0
    assert run_cli("generate", "--n", "10", "--seed", "42", "--out", str(b)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_generate_rejects_zero_assets(tmp_path):
    code = run_cli("generate", "--n", "0", "--out", str(tmp_path / "m.json"))
    assert code == 2


def test_generate_invariants_on_reload(tmp_path):
    path = tmp_path / "m.json"
    assert run_cli("generate", "--n", "50", "--seed", "42", "--out", str(path)) == 0
    market = load_market(path)
    s = market.pi_base.sum()
    assert 0.2 - 1e-9 <= s <= 0.75 + 1e-9
    recomputed = market.r + market.gamma * (market.sigma_cov.entries @ market.pi_base)
    assert np.abs(market.mu - recomputed).max() <= 1e-12


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    market = root / "market.json"
    run_dir = root / "run"
    assert run_cli("generate", "--n", "3", "--seed", "7", "--out", str(market)) == 0
    config = root / "cfg.toml"
    config.write_text(
        "[rollout]\nsteps = 3\n"
        "[train]\nhidden = [12, 12]\neval_nodes = 16\nmse_every = 2\n"
        "checkpoint_every = 5\n"
    )
    code = run_cli(
        "train", "--market", str(market), "--out", str(run_dir),
        "--iters", "10", "--batch", "16", "--seed", "1",
        "--config", str(config),
    )
    assert code == 0
    return market, run_dir


def test_train_smoke_metrics_rows(smoke_run):
    _, run_dir = smoke_run
    lines = (run_dir / "metrics.csv").read_text().splitlines()
    assert len(lines) == 11  # header + 10 rows
    assert (run_dir / "manifest.json").exists()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["mode"] == "pgdpo"
    assert manifest["train"]["iterations"] == 10


def test_eval_outputs(smoke_run, tmp_path):
    market, run_dir = smoke_run
    out = tmp_path / "eval"
    code = run_cli(
        "eval", "--market", str(market), "--run", str(run_dir),
        "--nodes", "32", "--out", str(out),
    )
    assert code == 0
    assert (out / "eval_mse.csv").exists()
    assert (out / "eval_foc.csv").exists()
    assert (out / "bands.csv").exists()
    heat = (out / "heatmap_0000.csv").read_text().splitlines()
    assert len(heat) == 1 + 101 * 101
    alloc_lines = (out / "alloc.csv").read_text().splitlines()[1:]
    weights = [float(line.split(",")[2]) for line in alloc_lines]
    assert abs(sum(weights) - 1.0) <= 1e-8
    assert alloc_lines[0].split(",")[1] == "riskfree"


def test_eval_oracle_checkpoint_near_zero_mse(smoke_run, tmp_path):
    market, _ = smoke_run
    out = tmp_path / "oracle_eval"
    code = run_cli(
        "eval", "--market", str(market), "--checkpoint", "oracle",
        "--nodes", "64", "--out", str(out),
    )
    assert code == 0
    lines = (out / "eval_mse.csv").read_text().splitlines()
    by_ref = {l.split(",")[2]: l.split(",") for l in lines[1:]}
    cons_mse = float(by_ref["experiment"][3])
    inv_mse = float(by_ref["experiment"][4])
    assert cons_mse <= 1e-6  # grid interpolation of g(t) only
    assert inv_mse <= 1e-20
    # the zero-bequest reference disagrees with the bequest-1 oracle rule
    assert float(by_ref["zero_bequest"][3]) > 1e-3
    assert float(by_ref["zero_bequest"][4]) <= 1e-20  # weights unaffected


def test_eval_checkpoint_market_mismatch(smoke_run, tmp_path):
    _, run_dir = smoke_run
    other = tmp_path / "other.json"
    assert run_cli("generate", "--n", "5", "--seed", "1", "--out", str(other)) == 0
    code = run_cli(
        "eval", "--market", str(other), "--run", str(run_dir),
        "--out", str(tmp_path / "bad"),
    )
    assert code == 5


def test_eval_needs_source(tmp_path, smoke_run):
    market, _ = smoke_run
    code = run_cli("eval", "--market", str(market), "--out", str(tmp_path / "x"))
    assert code == 2


def test_export_bundle(smoke_run, tmp_path):
    market, run_dir = smoke_run
    out = tmp_path / "bundle"
    assert run_cli("export", "--run", str(run_dir), "--out", str(out)) == 0
    bundle = json.loads((out / "bundle.json").read_text())
    assert "metrics.csv" in bundle["files"]
    assert (out / "metrics.csv").exists()


def test_resume_flag_roundtrip(tmp_path):
    market = tmp_path / "m.json"
    assert run_cli("generate", "--n", "2", "--seed", "3", "--out", str(market)) == 0
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        "[rollout]\nsteps = 2\n"
        "[train]\nhidden = [10, 10]\neval_nodes = 8\nmse_every = 2\n"
        "checkpoint_every = 4\n"
    )
    full = tmp_path / "full"
    split = tmp_path / "split"
    base = ["--market", str(market), "--batch", "8", "--seed", "2", "--config", str(cfg)]
    assert run_cli("train", *base, "--iters", "8", "--out", str(full)) == 0
    assert run_cli("train", *base, "--iters", "4", "--out", str(split)) == 0
    assert run_cli("train", *base, "--iters", "8", "--out", str(split), "--resume") == 0
    assert (full / "metrics.csv").read_bytes() == (split / "metrics.csv").read_bytes()
