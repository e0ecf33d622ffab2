"""Fully dynamic maintenance: aux table, bucket tree, and the op surface."""

from __future__ import annotations

import numpy as np
import pytest

from trimcore import (
    AuxTable,
    BuilderSpec,
    ConfigError,
    Continuity,
    DynamicRobustCoreset,
    LossModel,
    ParamBall,
    WeightedPoint,
    build_robust,
    dataset_costs,
    sandwich_report,
    trimmed_value,
)

from conftest import make_dataset


def unit_ball(dim, radius=0.5):
    return ParamBall(np.zeros(dim), radius, Continuity("lipschitz", 1.0))


def brute_pool(dyn):
    """Top-z~ ids recomputed from scratch: (value desc, id asc) prefix."""
    t = dyn.table
    entries = [(t.value_at(i), t.id_at(i)) for i in range(len(t))]
    entries.sort(key=lambda e: (-e[0], e[1]))
    return {pid for _, pid in entries[: dyn.z_tilde]}


def fresh(n=300, z=4.0, beta=0.0, eps=0.3, bucket=32, seed=0, dim=2, **kw):
    rng = np.random.default_rng(seed)
    X = np.concatenate([
        rng.normal(size=(n - n // 20, dim)) * 2.0,
        rng.normal(size=(n // 20, dim)) * 30.0,
    ])
    data = make_dataset(X)
    model = LossModel("kmedian", dim=dim, k=1)
    dyn = DynamicRobustCoreset.init(
        model, data, unit_ball(dim), z=z, beta=beta, eps=eps,
        builder=BuilderSpec("uniform", size=24), bucket_size=bucket, seed=seed, **kw,
    )
    return dyn, data, model


# --- aux table ---------------------------------------------------------------

def test_aux_table_sorted_and_top_ids():
    t = AuxTable()
    for pid, v in [(3, 1.0), (1, 5.0), (2, 5.0), (9, 0.5)]:
        t.insert(pid, v)
    assert t.check_sorted()
    # ties order by id ascending in the trimming sense: id 1 outranks id 2
    assert t.top_ids(2) == [1, 2]
    t.remove(1)
    assert t.top_ids(2) == [2, 3]
    with pytest.raises(ConfigError):
        t.insert(2, 7.0)
    with pytest.raises(ConfigError):
        t.remove(42)


# --- init --------------------------------------------------------------------

def test_init_rejects_bad_inputs():
    model = LossModel("kmedian", dim=1, k=1)
    ball = unit_ball(1)
    spec = BuilderSpec("uniform", size=4)
    # the dataset layer already refuses to represent an empty set
    with pytest.raises(ConfigError):
        make_dataset(np.empty((0, 1)))
    weighted = make_dataset(np.arange(10.0), w=np.full(10, 2.0))
    with pytest.raises(ConfigError):
        DynamicRobustCoreset.init(model, weighted, ball, 1.0, 0.0, 0.3, spec, 8)
    dup = make_dataset(np.arange(4.0), ids=[0, 1, 1, 2])
    with pytest.raises(ConfigError):
        DynamicRobustCoreset.init(model, dup, ball, 1.0, 0.0, 0.3, spec, 8)


def test_init_invariants_and_heights():
    dyn, data, _ = fresh(n=300, bucket=32)
    dyn.check_invariants()
    assert dyn.pool == brute_pool(dyn)
    # 300 points, bucket 32: 16 slots, 5 levels
    assert dyn.tree.S == 16
    assert dyn.tree.height == 5


def test_level_accuracy_splits_eps_over_4h():
    dyn, _, _ = fresh(n=300, bucket=32, eps=0.2)
    assert dyn.tree.eps_level == pytest.approx(0.2 / 4.0 / dyn.tree.height)


# --- single ops --------------------------------------------------------------

def test_insert_below_threshold_goes_to_tree():
    dyn, _, _ = fresh()
    pool_before = set(dyn.pool)
    tree_before = len(dyn.tree.ids())
    stats = dyn.insert(WeightedPoint(10_000, np.zeros(2)))
    dyn.check_invariants()
    assert dyn.pool == pool_before
    assert len(dyn.tree.ids()) == tree_before + 1
    assert stats.buckets_touched <= 4 * dyn.tree.height


def test_insert_above_threshold_demotes_boundary_point():
    dyn, _, _ = fresh()
    pool_before = set(dyn.pool)
    tree_before = len(dyn.tree.ids())
    stats = dyn.insert(WeightedPoint(10_001, np.full(2, 500.0)))
    dyn.check_invariants()
    assert 10_001 in dyn.pool
    assert len(dyn.pool) == dyn.z_tilde
    assert len(dyn.tree.ids()) == tree_before + 1
    # exactly one membership change beyond the new point itself
    assert stats.pool_moves == 1
    assert dyn.pool == brute_pool(dyn)
    assert dyn.pool != pool_before | {10_001}


def test_delete_inlier_keeps_pool():
    dyn, _, _ = fresh()
    victim = next(iter(dyn.tree.ids()))
    pool_before = set(dyn.pool)
    dyn.delete(victim)
    dyn.check_invariants()
    assert dyn.pool == pool_before
    assert victim not in dyn.table


def test_delete_suspected_outlier_promotes_critical():
    dyn, _, _ = fresh()
    victim = max(dyn.pool)
    tree_before = len(dyn.tree.ids())
    dyn.delete(victim)
    dyn.check_invariants()
    assert len(dyn.pool) == dyn.z_tilde
    assert len(dyn.tree.ids()) == tree_before - 1
    assert dyn.pool == brute_pool(dyn)


def test_update_crossing_threshold_migrates():
    dyn, _, _ = fresh()
    victim = next(iter(dyn.tree.ids()))
    dyn.update(WeightedPoint(victim, np.full(2, 900.0)))
    dyn.check_invariants()
    assert victim in dyn.pool
    # push it back down again
    dyn.update(WeightedPoint(victim, np.zeros(2)))
    dyn.check_invariants()
    assert victim not in dyn.pool
    assert dyn.pool == brute_pool(dyn)


def test_update_same_side_keeps_membership_counts():
    dyn, _, _ = fresh()
    before = len(dyn.tree.ids())
    victim = next(iter(dyn.tree.ids()))
    dyn.update(WeightedPoint(victim, np.array([0.1, 0.1])))
    dyn.check_invariants()
    assert len(dyn.tree.ids()) == before


def test_update_missing_id_rejected():
    dyn, _, _ = fresh()
    with pytest.raises(ConfigError):
        dyn.update(WeightedPoint(999_999, np.zeros(2)))


def test_delete_guard_refuses_draining_below_z():
    data = make_dataset(np.arange(4.0))
    model = LossModel("kmedian", dim=1, k=1)
    # tiny flat instance: the eps0 fallback warning is expected here
    with pytest.warns(UserWarning, match="falling back"):
        dyn = DynamicRobustCoreset.init(
            model, data, unit_ball(1), z=2.0, beta=0.0, eps=0.3,
            builder=BuilderSpec("uniform", size=4), bucket_size=2,
        )
    dyn.delete(0)
    with pytest.raises(ConfigError):
        dyn.delete(1)


# --- change_z ----------------------------------------------------------------

def test_change_z_moves_exactly_delta_z_tilde_points():
    dyn, _, _ = fresh(n=1000, z=5.0, eps=0.16, bucket=64, fz_lower=1e12)
    assert dyn.eps0 == 0.01
    assert dyn.z_tilde == 505
    stats = dyn.change_z(+1.0)
    dyn.check_invariants()
    # z~ jumps from 101*5 = 505 to 101*6 = 606
    assert dyn.z_tilde == 606
    assert stats.pool_moves == 101
    assert dyn.pool == brute_pool(dyn)


def test_change_z_involution_restores_pool():
    dyn, _, _ = fresh(n=600, z=5.0, bucket=32)
    before = set(dyn.pool)
    dyn.change_z(+1.0)
    dyn.change_z(-1.0)
    dyn.check_invariants()
    assert dyn.pool == before


def test_change_z_zero_is_noop():
    dyn, _, _ = fresh()
    v_before = dyn.pool_version
    stats = dyn.change_z(0.0)
    assert stats.pool_moves == 0
    assert dyn.pool_version == v_before


def test_change_z_bounds_enforced():
    dyn, _, _ = fresh(n=100, z=2.0, bucket=16)
    with pytest.raises(ConfigError):
        dyn.change_z(-2.0)
    with pytest.raises(ConfigError):
        dyn.change_z(98.0)


# --- replay ------------------------------------------------------------------

def replay_ops(dyn, rng, count, next_id, dim=2):
    live = list(dyn.store)
    for _ in range(count):
        roll = rng.random()
        if roll < 0.45:
            pt = WeightedPoint(next_id, rng.normal(size=dim) * (30.0 if rng.random() < 0.2 else 2.0))
            dyn.insert(pt)
            live.append(next_id)
            next_id += 1
        elif roll < 0.65 and dyn.n > dyn.z + 2:
            victim = int(live.pop(int(rng.integers(len(live)))))
            dyn.delete(victim)
        elif roll < 0.85:
            victim = int(live[int(rng.integers(len(live)))])
            dyn.update(WeightedPoint(victim, rng.normal(size=dim) * (30.0 if rng.random() < 0.3 else 2.0)))
        else:
            dz = float(rng.integers(-2, 3))
            if 1 <= dyn.z + dz < dyn.n - 4:
                dyn.change_z(dz)
        dyn.check_invariants()
        assert dyn.pool == brute_pool(dyn)
    return next_id


def test_mixed_op_replay_keeps_all_invariants():
    dyn, _, _ = fresh(n=300, z=4.0, bucket=32, seed=1)
    rng = np.random.default_rng(99)
    replay_ops(dyn, rng, 150, next_id=100_000)
    # counters bounded by the height on every non-rebuild op
    for st in dyn.history:
        if st.op in ("insert", "delete", "update") and not st.rebuilt:
            assert st.buckets_touched <= 4 * dyn.tree.height, st


def test_replay_is_deterministic():
    outs = []
    for _ in range(2):
        dyn, _, model = fresh(n=250, z=3.0, beta=0.2, bucket=32, seed=2)
        rng = np.random.default_rng(7)
        replay_ops(dyn, rng, 60, next_id=50_000)
        rc = dyn.query()
        u = rc.union()
        order = np.argsort(u.ids, kind="stable")
        outs.append((u.ids[order], u.X[order], u.w[order]))
    assert np.array_equal(outs[0][0], outs[1][0])
    assert np.array_equal(outs[0][1], outs[1][1])
    assert np.array_equal(outs[0][2], outs[1][2])


def test_identity_reduction_evaluates_exactly():
    # reduce size above n: every node keeps its union verbatim, so the queried
    # coreset is the dataset itself and trimmed values match bit for bit
    dyn, _, model = fresh(n=200, z=3.0, bucket=16, reduce_size=4096)
    rng = np.random.default_rng(3)
    replay_ops(dyn, rng, 40, next_id=70_000)
    rc = dyn.query()
    u = rc.union()
    u = u.subset(np.argsort(u.ids))
    snap = dyn.dataset()
    assert np.array_equal(u.ids, snap.ids)
    theta = rng.normal(size=2)
    cu = dataset_costs(model, theta, u)
    cs = dataset_costs(model, theta, snap)
    assert trimmed_value(cu, u.w, u.ids, dyn.z) == trimmed_value(cs, snap.w, snap.ids, dyn.z)


def test_query_beta_positive_stable_until_pool_changes():
    dyn, _, _ = fresh(n=300, z=4.0, beta=0.3, bucket=32, seed=4)
    a = dyn.query()
    b = dyn.query()
    assert np.array_equal(a.c_so.ids, b.c_so.ids)
    # a pool-touching op reseeds the sample
    dyn.insert(WeightedPoint(90_000, np.full(2, 400.0)))
    c = dyn.query()
    assert not np.array_equal(a.c_so.ids, c.c_so.ids) or len(a.c_so) != len(c.c_so)


def test_growth_rebuild_flagged_and_consistent():
    dyn, _, _ = fresh(n=64, z=2.0, bucket=8, seed=5)
    rng = np.random.default_rng(11)
    rebuilt = False
    for i in range(200):
        dyn.insert(WeightedPoint(200_000 + i, rng.normal(size=2)))
        rebuilt = rebuilt or dyn.last_op.rebuilt
        dyn.check_invariants()
    assert rebuilt
    assert dyn.pool == brute_pool(dyn)


def test_degenerate_all_outliers_query_has_empty_tree_side():
    data = make_dataset(np.random.default_rng(6).normal(size=(40, 1)) * 10)
    model = LossModel("kmedian", dim=1, k=1)
    dyn = DynamicRobustCoreset.init(
        model, data, unit_ball(1), z=10.0, beta=0.0, eps=0.3,
        builder=BuilderSpec("uniform", size=8), bucket_size=8,
    )
    assert dyn.degenerate
    rc = dyn.query()
    assert rc.c_si is None or len(rc.c_si) == 0
    assert len(rc.c_so) == dyn.n


def test_supervised_points_flow_through():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(120, 2))
    y = np.where(rng.random(120) < 0.5, 1.0, -1.0)
    data = make_dataset(X, y=y)
    model = LossModel("logistic", dim=2)
    ball = ParamBall(np.zeros(2), 0.3, Continuity("lipschitz", float(np.linalg.norm(X, axis=1).max())))
    # logistic costs hug ln 2 at the origin, so the transfer bound collapses
    with pytest.warns(UserWarning, match="falling back"):
        dyn = DynamicRobustCoreset.init(
            model, data, ball, z=3.0, beta=0.0, eps=0.3,
            builder=BuilderSpec("uniform", size=16), bucket_size=16,
        )
    dyn.insert(WeightedPoint(500, rng.normal(size=2), label=1.0))
    dyn.delete(0)
    dyn.check_invariants()
    rc = dyn.query()
    assert rc.union().y is not None


def test_single_bucket_matches_static_construction():
    rng = np.random.default_rng(9)
    X = np.concatenate([rng.normal(size=(90, 2)) * 2.0, rng.normal(size=(10, 2)) * 40.0])
    data = make_dataset(X)
    model = LossModel("kmedian", dim=2, k=1)
    ball = unit_ball(2)
    spec = BuilderSpec("uniform", size=20)
    dyn = DynamicRobustCoreset.init(
        model, data, ball, z=1.0, beta=0.0, eps=0.3,
        builder=spec, bucket_size=len(data), seed=42,
    )
    rc_dyn = dyn.query()
    rc_static = build_robust(model, data, ball, z=1.0, beta=0.0, eps=0.3, builder=spec, seed=42)
    assert rc_dyn.provenance["eps0"] == rc_static.provenance["eps0"]
    assert rc_dyn.split.z_tilde == rc_static.split.z_tilde
    assert rc_dyn.split.tau == rc_static.split.tau
    # identical suspected splits; beta = 0 keeps both pools verbatim
    assert np.array_equal(np.sort(rc_dyn.c_so.ids), np.sort(rc_static.c_so.ids))
    # the one-leaf tree carries its inliers raw: an exact inlier summary
    si_ids = data.ids[rc_static.split.si_rows]
    assert np.array_equal(np.sort(rc_dyn.c_si.data.ids), np.sort(si_ids))


def test_post_op_query_passes_sandwich():
    dyn, _, model = fresh(n=400, z=4.0, beta=0.2, eps=0.3, bucket=32, seed=10)
    rng = np.random.default_rng(12)
    replay_ops(dyn, rng, 50, next_id=80_000)
    rc = dyn.query()
    rep = sandwich_report(
        model, dyn.dataset(), rc.union(), unit_ball(2), z=dyn.z,
        beta=dyn.beta, eps=dyn.eps, count=80, seed=1,
    )
    assert rep.passed, (rep.worst_lower_slack, rep.worst_upper_slack)
