"""Bench harness and the command-line surface, exit codes included."""

from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from trimcore import LossModel, synth_generate
from trimcore.bench import (
    budget_robust_coreset,
    config_from_json,
    pilot_ball,
    random_oplog,
    run_dynamic_bench,
    run_static_bench,
    write_run_dir,
)
from trimcore.cli import main
from trimcore.errors import ConfigError

TIMING_COLUMNS = {"speedup", "t_build", "t_solve_coreset", "t_solve_full",
                  "t_maintain", "t_maintain_cum"}


# --- config ------------------------------------------------------------------

def base_cfg(**over):
    cfg = {
        "model": {"kind": "kmedian", "k": 3},
        "synth": {"kind": "mixture", "n": 1200, "dim": 2, "k": 3, "separation": 10.0},
        "outliers": {"count": 24, "mode": "clustering"},
        "z": 24.0,
        "eps": 0.3,
        "beta": 0.2,
        "robust": True,
        "builders": [{"name": "uniform", "size": 120}],
        "trials": 1,
        "seed": 0,
    }
    cfg.update(over)
    return cfg


def test_config_rejects_unknown_fields():
    with pytest.raises(ConfigError, match="mystery"):
        config_from_json(base_cfg(mystery=1))


def test_config_requires_exactly_one_source(tmp_path):
    with pytest.raises(ConfigError):
        config_from_json(base_cfg(data_path=str(tmp_path / "d.json")))
    cfg = base_cfg()
    del cfg["synth"]
    with pytest.raises(ConfigError):
        config_from_json(cfg)


def test_config_builder_entries_validated():
    with pytest.raises(ConfigError):
        config_from_json(base_cfg(builders=[{"size": 10}]))


# --- pilot ball --------------------------------------------------------------

def test_pilot_ball_records_radius_source(mixture_instance):
    data, _ = mixture_instance(n=400, outliers=8)
    model = LossModel("kmedian", dim=2, k=3)
    ball, info = pilot_ball(model, data, frac=0.2, seed=0)
    assert ball.radius > 0
    assert info["ell_source"] in ("pilot_drift", "floor")
    assert "pilot_drift" in info
    forced, finfo = pilot_ball(model, data, frac=0.2, seed=0, ell=0.7)
    assert forced.radius == 0.7
    assert finfo["ell_source"] == "supplied"


# --- oplog generation --------------------------------------------------------

def test_random_oplog_deterministic_and_well_formed():
    data, _ = synth_generate("mixture", n=200, dim=2, seed=0)
    ops1 = random_oplog(data, 80, seed=3, z0=5.0)
    ops2 = random_oplog(data, 80, seed=3, z0=5.0)
    assert ops1 == ops2
    kinds = {op["op"] for op in ops1}
    assert kinds <= {"insert", "delete", "update", "changez"}
    for op in ops1:
        if op["op"] == "changez":
            assert abs(op["dz"]) <= 2


# --- static bench ------------------------------------------------------------

def test_budgeted_robust_build_respects_size(mixture_instance):
    from trimcore import BuilderSpec

    data, _ = mixture_instance(n=1500, outliers=30, seed=3)
    model = LossModel("kmedian", dim=2, k=3)
    ball, _ = pilot_ball(model, data, frac=0.1, seed=0)
    core = budget_robust_coreset(
        model, data, ball, z=30.0, eps=0.3,
        builder=BuilderSpec("uniform", size=150), size=150, seed=0,
    )
    assert len(core) <= 165
    assert core.total_weight > 0


def test_static_bench_rows_and_determinism(tmp_path):
    cfg = config_from_json(base_cfg())
    rows1, prov1 = run_static_bench(cfg)
    rows2, _ = run_static_bench(cfg)
    assert len(rows1) == 1
    r1, r2 = rows1[0], rows2[0]
    assert r1.method == "uniform+"
    assert r1.loss_ratio == r2.loss_ratio
    assert r1.actual_size == r2.actual_size
    assert r1.accuracy == r2.accuracy
    assert r1.loss_ratio >= 1.0 - 0.3
    assert "package_version" in prov1
    out = write_run_dir(tmp_path / "run", rows1, prov1)
    assert (out / "results.csv").exists()
    assert (out / "provenance.json").exists()
    svgs = list((out / "plots").glob("*.svg"))
    assert svgs, "no figures rendered"


def test_static_bench_plain_vs_robust_method_names():
    cfg = config_from_json(base_cfg(robust=False))
    rows, _ = run_static_bench(cfg)
    assert rows[0].method == "uniform"


# --- dynamic bench -----------------------------------------------------------

def test_dynamic_bench_counters_monotone_in_height(tmp_path):
    # small z keeps the suspected-outlier pool tiny, so the tree holds
    # nearly all points and the height law is visible in the counters
    cfg = config_from_json(base_cfg(
        synth={"kind": "mixture", "n": 1024, "dim": 2, "k": 3, "separation": 10.0},
        outliers=None, z=2.0, beta=0.0,
        builders=[{"name": "uniform", "size": 64}],
        heights=[2, 3, 4], snapshot_every=50,
    ))
    data, _ = synth_generate("mixture", n=1024, dim=2, seed=0, k=3, separation=10.0)
    ops = random_oplog(data, 40, seed=1, z0=2.0)
    series, prov = run_dynamic_bench(cfg, ops)
    by_h = {}
    for row in series:
        by_h.setdefault(row["h"], []).append(row["raw_points_touched"])
    heights = sorted(by_h)
    assert heights == [2, 3, 4]
    means = [np.mean(by_h[h]) for h in heights]
    assert means[0] > means[1] > means[2]
    out = write_run_dir(tmp_path / "dyn", None, prov, series={"dynamic": series})
    assert (out / "series" / "dynamic.csv").exists()
    assert list((out / "plots").glob("*.svg"))


def test_dynamic_bench_buckets_bounded_by_height():
    cfg = config_from_json(base_cfg(
        synth={"kind": "mixture", "n": 256, "dim": 2, "k": 3, "separation": 10.0},
        outliers=None, z=6.0, beta=0.0,
        builders=[{"name": "uniform", "size": 32}], heights=[3],
    ))
    data, _ = synth_generate("mixture", n=256, dim=2, seed=0, k=3, separation=10.0)
    ops = random_oplog(data, 30, seed=2, z0=6.0)
    series, _ = run_dynamic_bench(cfg, ops)
    for row in series:
        if row["op"] in ("insert", "delete") and not row["rebuilt"]:
            assert row["buckets_touched"] <= 4 * 3


def test_empty_oplog_gives_no_rows():
    cfg = config_from_json(base_cfg(
        synth={"kind": "mixture", "n": 128, "dim": 2, "k": 3, "separation": 10.0},
        outliers=None, z=4.0, beta=0.0, heights=[2],
        builders=[{"name": "uniform", "size": 16}],
    ))
    series, _ = run_dynamic_bench(cfg, [])
    assert series == []


# --- cli ---------------------------------------------------------------------

def run_cli(*argv):
    return main(list(argv))


def test_cli_pipeline_synth_build_solve(tmp_path):
    dataset = tmp_path / "mix.csv"
    assert run_cli(
        "synth", "--kind", "mixture", "--n", "400", "--dim", "2", "--k", "3",
        "--seed", "0", "--outliers", "8", "--out", str(dataset),
    ) == 0
    manifest = dataset.with_suffix(".json")
    assert manifest.exists()

    model = tmp_path / "model.json"
    model.write_text('{"kind": "kmedian", "k": 3}\n')

    core = tmp_path / "core.csv"
    assert run_cli(
        "build", "--data", str(manifest), "--model", str(model),
        "--builder", "gsp", "--size", "80", "--eps", "0.3", "--seed", "1",
        "--robust", "--z", "8", "--beta", "0.2", "--out", str(core),
    ) == 0
    prov = json.loads(core.with_suffix(".provenance.json").read_text())
    for key in ("builder", "params", "seed", "source_size"):
        assert key in prov
    for key in ("eps0", "z_tilde", "tau", "delta"):
        assert key in prov["params"]

    solved = tmp_path / "fit.json"
    assert run_cli(
        "solve", "--data", str(core), "--model", str(model),
        "--z", "8", "--seed", "0", "--out", str(solved),
    ) == 0
    rep = json.loads(solved.read_text())
    assert "theta" in rep and "trimmed_loss" in rep
    assert len(rep["theta"]) == 6


def test_cli_ingest_validates_and_rewrites(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text("id,label,w,f1,f2\n1,,1.0,0.5,0.5\n2,,1.0,1.5,0.0\n")
    out = tmp_path / "clean.csv"
    assert run_cli("ingest", "--data", str(raw), "--out", str(out)) == 0
    assert out.exists() and out.with_suffix(".json").exists()
    bad = tmp_path / "bad.csv"
    bad.write_text("id,label,w,f1\n1,,1.0\n")
    assert run_cli("ingest", "--data", str(bad), "--out", str(out)) == 2
    # a .json out path would collide with the manifest sidecar
    assert run_cli("ingest", "--data", str(raw), "--out", str(tmp_path / "m.json")) == 2


def test_cli_sensitivity_both_methods(tmp_path):
    dataset = tmp_path / "d.csv"
    run_cli("synth", "--kind", "logistic", "--n", "150", "--dim", "2",
            "--seed", "2", "--noise", "0.4", "--out", str(dataset))
    model = tmp_path / "model.json"
    model.write_text('{"kind": "logistic"}\n')
    out = tmp_path / "sens.csv"
    assert run_cli(
        "sensitivity", "--data", str(dataset), "--model", str(model),
        "--method", "lipschitz", "--ell", "0.1", "--out", str(out),
    ) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 150
    assert all(0 < float(r["s_i"]) <= 1 for r in rows)
    assert run_cli(
        "sensitivity", "--data", str(dataset), "--model", str(model),
        "--method", "qfp", "--ell", "0.3", "--out", str(tmp_path / "q.csv"),
    ) == 0


def test_cli_exit_codes(tmp_path):
    # unknown model kind: config error
    model = tmp_path / "model.json"
    model.write_text('{"kind": "astrology"}\n')
    dataset = tmp_path / "d.csv"
    run_cli("synth", "--kind", "mixture", "--n", "50", "--dim", "2",
            "--seed", "0", "--out", str(dataset))
    assert run_cli(
        "solve", "--data", str(dataset), "--model", str(model), "--z", "2",
    ) == 2
    # missing file
    assert run_cli(
        "solve", "--data", str(tmp_path / "nope.csv"), "--model", str(model), "--z", "1",
    ) == 2


def test_cli_dynamic_replay(tmp_path):
    dataset = tmp_path / "d.csv"
    run_cli("synth", "--kind", "mixture", "--n", "256", "--dim", "2", "--k", "3",
            "--seed", "3", "--out", str(dataset))
    model = tmp_path / "model.json"
    model.write_text('{"kind": "kmedian", "k": 3}\n')
    from trimcore.io import read_dataset_csv, write_oplog

    data = read_dataset_csv(dataset)
    ops = random_oplog(data, 60, seed=4, z0=6.0)
    oplog = tmp_path / "ops.jsonl"
    write_oplog(oplog, ops)
    outdir = tmp_path / "dynrun"
    assert run_cli(
        "dynamic", "--data", str(dataset), "--model", str(model),
        "--oplog", str(oplog), "--z", "6", "--beta", "0", "--eps", "0.3",
        "--builder", "uniform", "--size", "32", "--bucket-size", "32",
        "--snapshot-every", "30", "--out", str(outdir),
    ) == 0
    assert (outdir / "ops.csv").exists()
    snaps = sorted(outdir.glob("coreset_*.csv"))
    assert snaps
    with open(outdir / "ops.csv") as fh:
        oprows = list(csv.DictReader(fh))
    assert len(oprows) == 60


def test_cli_bench_static_run_dir(tmp_path):
    cfgp = tmp_path / "cfg.json"
    cfgp.write_text(json.dumps(base_cfg(
        synth={"kind": "mixture", "n": 600, "dim": 2, "k": 3, "separation": 10.0},
        outliers={"count": 12, "mode": "clustering"}, z=12.0,
        builders=[{"name": "uniform", "size": 80}],
    )))
    outdir = tmp_path / "run"
    assert run_cli("bench", "--config", str(cfgp), "--mode", "static",
                   "--out", str(outdir)) == 0
    with open(outdir / "results.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and rows[0]["method"] == "uniform+"
    assert (outdir / "plots").is_dir()
