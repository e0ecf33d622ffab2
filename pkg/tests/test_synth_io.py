"""Synthetic generators, outlier injection, and every file format."""

from __future__ import annotations

import json

import numpy as np
import pytest

from trimcore import (
    BuilderSpec,
    ConfigError,
    DataFormatError,
    LossModel,
    fit_trimmed,
    inject_outliers,
    synth_generate,
    uniform_sample,
)
from trimcore.io import (
    read_coreset_csv,
    read_dataset_csv,
    read_manifest,
    read_oplog,
    write_coreset,
    write_dataset_csv,
    write_manifest,
    write_oplog,
)

from conftest import make_dataset


# --- generators --------------------------------------------------------------

def test_synth_deterministic_per_seed():
    a, pa = synth_generate("mixture", n=100, dim=3, seed=5, k=4)
    b, pb = synth_generate("mixture", n=100, dim=3, seed=5, k=4)
    c, _ = synth_generate("mixture", n=100, dim=3, seed=6, k=4)
    assert np.array_equal(a.X, b.X)
    assert pa == pb
    assert not np.array_equal(a.X, c.X)


def test_mixture_separation_is_exact():
    _, params = synth_generate("mixture", n=60, dim=2, seed=0, k=3, separation=7.5)
    centers = np.asarray(params["centers"])
    gaps = [
        np.linalg.norm(centers[i] - centers[j])
        for i in range(3)
        for j in range(i + 1, 3)
    ]
    assert min(gaps) == pytest.approx(7.5)


def test_mixture_centers_recoverable():
    data, params = synth_generate(
        "mixture", n=3000, dim=2, seed=1, k=3, separation=10.0, cluster_std=1.0
    )
    centers = np.asarray(params["centers"])
    rep = fit_trimmed(LossModel("kmeans", dim=2, k=3), data, z=0.0, seed=0)
    found = rep.theta.reshape(3, 2)
    for c in centers:
        assert np.linalg.norm(found - c, axis=1).min() <= 0.1 * 10.0


def test_logistic_planted_labels_noise_free():
    data, params = synth_generate("logistic", n=500, dim=4, seed=2, noise=0.0)
    theta = np.asarray(params["theta_planted"])
    assert np.all(np.where(data.X @ theta >= 0, 1.0, -1.0) == data.y)


def test_single_point_dataset():
    data, _ = synth_generate("mixture", n=1, dim=2, seed=3, k=1)
    assert len(data) == 1


def test_synth_rejects_bad_shapes():
    with pytest.raises(ConfigError):
        synth_generate("mixture", n=0, dim=2)
    with pytest.raises(ConfigError):
        synth_generate("nonesuch", n=5, dim=2)


# --- outlier injection -------------------------------------------------------

def test_inject_zero_count_is_identity():
    data, _ = synth_generate("mixture", n=50, dim=2, seed=4)
    out = inject_outliers(data, 0, "clustering", seed=0)
    assert np.array_equal(out.X, data.X)


def test_inject_deterministic_and_leaves_source_alone():
    data, _ = synth_generate("mixture", n=80, dim=2, seed=5)
    before = data.X.copy()
    o1 = inject_outliers(data, 10, "clustering", seed=9)
    o2 = inject_outliers(data, 10, "clustering", seed=9)
    assert np.array_equal(o1.X, o2.X)
    assert np.array_equal(data.X, before)
    assert (~np.isclose(o1.X, data.X).all(axis=1)).sum() == 10


def test_inject_sigma_zero_warns():
    data, _ = synth_generate("mixture", n=30, dim=2, seed=6)
    with pytest.warns(UserWarning, match="sigma=0"):
        inject_outliers(data, 3, "clustering", seed=0, sigma=0.0)


def test_inject_supervised_needs_labels_and_flips_some():
    data, _ = synth_generate("mixture", n=30, dim=2, seed=7)
    with pytest.raises(ConfigError):
        inject_outliers(data, 3, "supervised", seed=0)
    labeled, _ = synth_generate("logistic", n=200, dim=2, seed=8)
    out = inject_outliers(labeled, 100, "supervised", seed=1)
    assert 0 < (out.y != labeled.y).sum() < 100


def test_inject_count_bounds():
    data, _ = synth_generate("mixture", n=20, dim=2, seed=9)
    with pytest.raises(ConfigError):
        inject_outliers(data, 20, "clustering")
    with pytest.raises(ConfigError):
        inject_outliers(data, -1, "clustering")


# --- file formats ------------------------------------------------------------

def test_dataset_csv_round_trip_byte_stable(tmp_path):
    data, _ = synth_generate("logistic", n=40, dim=3, seed=10)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_dataset_csv(p1, data)
    back = read_dataset_csv(p1)
    assert np.array_equal(back.ids, data.ids)
    assert np.array_equal(back.X, data.X)
    assert np.array_equal(back.w, data.w)
    assert np.array_equal(back.y, data.y)
    write_dataset_csv(p2, back)
    assert p1.read_bytes() == p2.read_bytes()


def test_dataset_csv_unlabeled_blank_column(tmp_path):
    data, _ = synth_generate("mixture", n=20, dim=2, seed=11)
    p = tmp_path / "m.csv"
    write_dataset_csv(p, data)
    header, first = p.read_text().splitlines()[:2]
    assert header == "id,label,w,f1,f2"
    assert first.split(",")[1] == ""
    back = read_dataset_csv(p)
    assert back.y is None


def test_dataset_csv_rejects_malformed(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,label,w,f1\n1,,1.0\n")
    with pytest.raises(DataFormatError, match="bad.csv:2"):
        read_dataset_csv(p)
    p.write_text("id,w,f1\n")
    with pytest.raises(DataFormatError):
        read_dataset_csv(p)
    p.write_text("id,label,w,f1\n1,,1.0,2.0\n1,,1.0,3.0\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        read_dataset_csv(p)


def test_dataset_csv_rejects_partial_labels(tmp_path):
    p = tmp_path / "half.csv"
    p.write_text("id,label,w,f1\n1,1.0,1.0,2.0\n2,,1.0,3.0\n")
    with pytest.raises(DataFormatError):
        read_dataset_csv(p)


def test_manifest_round_trip(tmp_path):
    data, _ = synth_generate("mixture", n=25, dim=2, seed=12)
    csvp = tmp_path / "d.csv"
    manp = tmp_path / "d.json"
    write_dataset_csv(csvp, data)
    write_manifest(manp, data, csvp, kind="mixture")
    m = read_manifest(manp)
    assert m["dim"] == 2 and m["n"] == 25
    assert m["kind"] == "mixture"
    again = read_dataset_csv(m["path"])
    assert np.array_equal(again.X, data.X)


def test_coreset_files_round_trip(tmp_path):
    data, _ = synth_generate("mixture", n=60, dim=2, seed=13)
    core = uniform_sample(data, 12, seed=0)
    csvp, jsonp = tmp_path / "c.csv", tmp_path / "c.json"
    write_coreset(csvp, jsonp, core)
    back = read_coreset_csv(csvp)
    assert np.array_equal(back.ids, core.data.ids)
    assert np.array_equal(back.w, core.data.w)
    assert np.array_equal(back.X, core.data.X)
    prov = json.loads(jsonp.read_text())
    assert prov["builder"] == "uniform"
    assert prov["source_size"] == 60
    assert prov["seed"] == 0


def test_coreset_csv_trailing_label_column(tmp_path):
    data, _ = synth_generate("logistic", n=40, dim=2, seed=14)
    core = uniform_sample(data, 8, seed=1)
    csvp, jsonp = tmp_path / "cl.csv", tmp_path / "cl.json"
    write_coreset(csvp, jsonp, core)
    header = csvp.read_text().splitlines()[0]
    assert header == "id,w,f1,f2,label"
    back = read_coreset_csv(csvp)
    assert back.y is not None
    assert np.array_equal(back.y, core.data.y)


def test_coreset_csv_allows_repeated_ids(tmp_path):
    # multiset coresets repeat source ids; the reader must keep every row
    p = tmp_path / "multi.csv"
    p.write_text("id,w,f1\n4,2.0,1.5\n4,2.0,1.5\n")
    back = read_coreset_csv(p)
    assert len(back) == 2


def test_sensitivity_files(tmp_path):
    from trimcore import Continuity, ParamBall, sensitivity_lipschitz
    from trimcore.io import write_sensitivity

    data = make_dataset(np.arange(1.0, 9.0))
    model = LossModel("kmedian", dim=1, k=1)
    ball = ParamBall(np.zeros(1), 0.2, Continuity("lipschitz", 1.0))
    prof = sensitivity_lipschitz(model, data, ball)
    csvp, jsonp = tmp_path / "s.csv", tmp_path / "s.json"
    write_sensitivity(csvp, jsonp, prof)
    rows = csvp.read_text().splitlines()
    assert rows[0] == "id,s_i"
    assert len(rows) == 1 + len(data)
    meta = json.loads(jsonp.read_text())
    assert meta["S"] == pytest.approx(prof.S)
    assert meta["method"] == "lipschitz"


def test_oplog_round_trip_and_validation(tmp_path):
    ops = [
        {"op": "insert", "id": 7, "features": [0.5, 1.0]},
        {"op": "delete", "id": 3},
        {"op": "update", "id": 7, "features": [1.0, 1.0], "label": 1.0},
        {"op": "changez", "dz": -1},
    ]
    p = tmp_path / "ops.jsonl"
    write_oplog(p, ops)
    assert read_oplog(p) == ops
    p.write_text('{"op": "insert", "id": 1}\n')
    with pytest.raises(DataFormatError, match="features"):
        read_oplog(p)
    p.write_text('{"op": "teleport"}\n')
    with pytest.raises(DataFormatError):
        read_oplog(p)
    p.write_text("not json\n")
    with pytest.raises(DataFormatError, match="ops.jsonl:1"):
        read_oplog(p)


def test_oplog_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        read_oplog(tmp_path / "absent.jsonl")
