"""End-to-end benchmark harness: configs, pipelines, and run-dir emission.

Static benchmark: for each method and coreset size, time the build and the
solve on the coreset, compare against one shared full-data solve, and report
loss_ratio = f_z(theta_C, X) / f_z(theta_X, X) evaluated on the full data
through the same trimming code path for both parameters.  Dynamic benchmark:
replay an op log at several tree heights and record per-op touched-work
counters plus periodic solve timings.

All randomness flows from the config seed; CSV outputs are reproducible
byte for byte except the wall-clock timing columns.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .builders import BuilderSpec
from .data import ParamBall, WeightedDataset, WeightedPoint
from .dynamic import DynamicRobustCoreset
from .errors import ConfigError
from .io import read_dataset_csv, read_manifest
from .losses import LossModel, continuity_for, dataset_costs, model_from_json, param_distance
from .robust import compute_eps0, split
from .solvers import fit_trimmed, pilot_theta
from .synth import inject_outliers, synth_generate
from .trim import trimmed_value

try:
    from importlib.metadata import version as _dist_version

    _pkg_version = _dist_version("trimcore")
except Exception:  # not installed (e.g. direct source checkout)
    _pkg_version = "unknown"

__all__ = [
    "ExperimentConfig",
    "BenchRow",
    "apply_op",
    "budget_robust_coreset",
    "pilot_ball",
    "random_oplog",
    "run_static_bench",
    "run_dynamic_bench",
    "write_run_dir",
    "config_from_json",
]

ELL_FLOOR_SCALE = 1e-2


@dataclass
class ExperimentConfig:
    """Benchmark pipeline settings.

    The dataset comes from `data_path` (dataset CSV or manifest JSON) or
    from `synth` generator params; `outliers` optionally injects planted
    outliers, and the trim weight z defaults to their count.
    """

    model: dict
    data_path: str | None = None
    synth: dict | None = None
    outliers: dict | None = None
    z: float | None = None
    beta: float = 0.0
    eps: float = 0.1
    robust: bool = True
    builders: list = field(default_factory=lambda: [{"name": "uniform", "size": 1000}])
    pilot_frac: float = 0.01
    ell: float | None = None
    continuity: str = "lipschitz"
    solver_max_rounds: int = 50
    trials: int = 1
    seed: int = 0
    holdout_frac: float = 0.1
    heights: list = field(default_factory=lambda: [2, 3, 4, 5, 6])
    snapshot_every: int = 50

    def __post_init__(self) -> None:
        if (self.data_path is None) == (self.synth is None):
            raise ConfigError("exactly one of data_path or synth must be set")
        if self.trials < 1:
            raise ConfigError(f"trials={self.trials} must be >= 1")
        if not self.builders:
            raise ConfigError("at least one builder entry required")
        for b in self.builders:
            if "name" not in b or "size" not in b:
                raise ConfigError("each builder entry needs name and size")
        if self.data_path is not None and not Path(self.data_path).exists():
            raise ConfigError(f"dataset not found: {self.data_path}")


def config_from_json(path_or_dict, **overrides) -> ExperimentConfig:
    if isinstance(path_or_dict, (str, Path)):
        with open(path_or_dict) as fh:
            obj = json.load(fh)
    else:
        obj = dict(path_or_dict)
    obj.update({k: v for k, v in overrides.items() if v is not None})
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if "model" not in obj:
        raise ConfigError("config needs a model descriptor")
    return ExperimentConfig(**obj)


@dataclass
class BenchRow:
    """Aggregated metrics for one (method, coreset size) cell."""

    method: str
    size: int
    actual_size: float
    loss_ratio: float
    speedup: float
    accuracy: float | None
    t_build: float
    t_solve_coreset: float
    t_solve_full: float
    trials: int

    def __post_init__(self) -> None:
        if self.loss_ratio < 0:
            raise ConfigError(f"loss_ratio {self.loss_ratio} must be >= 0")
        if self.speedup <= 0:
            raise ConfigError(f"speedup {self.speedup} must be > 0")


def pilot_ball(
    model: LossModel,
    data: WeightedDataset,
    frac: float = 0.01,
    seed: int | None = 0,
    ell: float | None = None,
    kind: str = "lipschitz",
) -> tuple[ParamBall, dict]:
    """Anchor ball from the pilot fit.

    Unless overridden, the radius is twice the parameter drift summed over
    the pilot solver's last 5 iterations, floored at 1% of the parameter
    scale so a fully converged pilot still yields a usable ball.
    """
    theta, report = pilot_theta(model, data, frac, seed, return_report=True)
    info: dict = {"pilot_rounds": report.iterations, "pilot_loss": report.trimmed_loss}
    if ell is None:
        tail = report.trace[-6:]
        drift = sum(
            param_distance(model, tail[i], tail[i + 1]) for i in range(len(tail) - 1)
        )
        scale = float(np.linalg.norm(np.asarray(theta, dtype=np.float64)))
        floor = ELL_FLOOR_SCALE * (1.0 + scale)
        ell = max(2.0 * drift, floor)
        info["ell_source"] = "pilot_drift" if 2.0 * drift >= floor else "floor"
        info["pilot_drift"] = drift
    else:
        info["ell_source"] = "supplied"
    info["ell"] = ell
    cont = continuity_for(model, data, theta, kind, ball_radius=ell)
    return ParamBall(theta, ell, cont), info


def _load_data(cfg: ExperimentConfig) -> tuple[WeightedDataset, dict]:
    if cfg.data_path is not None:
        path = Path(cfg.data_path)
        if path.suffix == ".json":
            manifest = read_manifest(path)
            data = read_dataset_csv(Path(path).parent / manifest["path"])
            return data, {"source": str(path)}
        return read_dataset_csv(path), {"source": str(path)}
    params = dict(cfg.synth)
    kind = params.pop("kind", None)
    n = params.pop("n", None)
    dim = params.pop("dim", None)
    if kind is None or n is None or dim is None:
        raise ConfigError("synth spec needs kind, n, dim")
    data, gen = synth_generate(kind, n, dim, seed=params.pop("seed", cfg.seed), **params)
    gen.pop("centers", None)
    gen.pop("theta_planted", None)
    return data, {"source": "synth", **gen}


def _apply_outliers(cfg: ExperimentConfig, data: WeightedDataset) -> tuple[WeightedDataset, float]:
    z = cfg.z
    if cfg.outliers:
        spec = dict(cfg.outliers)
        count = int(spec.pop("count"))
        mode = spec.pop("mode", "supervised" if data.y is not None else "clustering")
        data = inject_outliers(data, count, mode, seed=spec.pop("seed", cfg.seed), **spec)
        if z is None:
            z = float(count)
    if z is None:
        raise ConfigError("config needs z (or an outliers.count to default from)")
    return data, float(z)


def _holdout_split(
    data: WeightedDataset, frac: float, seed: int
) -> tuple[WeightedDataset, WeightedDataset | None]:
    if data.y is None or frac <= 0:
        return data, None
    rng = np.random.default_rng([seed, 29])
    m = int(frac * len(data))
    if m < 1 or m >= len(data):
        return data, None
    held = np.sort(rng.choice(len(data), size=m, replace=False))
    mask = np.ones(len(data), dtype=bool)
    mask[held] = False
    return data.subset(np.nonzero(mask)[0]), data.subset(held)


def _accuracy(theta: np.ndarray, held: WeightedDataset) -> float:
    pred = np.where(held.X @ theta >= 0, 1.0, -1.0)
    return float(np.mean(pred == held.y))


def budget_robust_coreset(
    model: LossModel,
    data: WeightedDataset,
    ball: ParamBall,
    z: float,
    eps: float,
    builder: BuilderSpec,
    size: int,
    seed: int | None,
) -> WeightedDataset:
    """Robust coreset fitted to a total size budget.

    The suspected-outlier split uses the standard eps0 threshold, but both
    sides are then compressed by the same black box, dividing the budget in
    proportion to side mass.  The analysis-faithful construction (pool kept
    verbatim or delta-sampled at its formula size) lives in build_robust;
    at practical budgets the pool, which holds z~ points, must be sampled
    down like everything else, and the mass-preserving weighted samplers
    keep the trimmed objective consistent.
    """
    from dataclasses import replace as _replace

    eps0 = compute_eps0(model, data, ball, z, eps)
    sp = split(model, data, ball, z, eps0)
    so = data.subset(sp.so_rows)
    if sp.si_rows.shape[0] == 0:
        return _replace(builder, size=size, per_layer=None).build(
            model, so, ball, eps / 4.0, seed
        ).data
    si = data.subset(sp.si_rows)
    frac_so = so.total_weight / data.total_weight
    m_so = min(len(so), max(1, round(size * frac_so)))
    m_si = max(1, size - m_so)
    so_seed = None if seed is None else seed + 1
    c_si = _replace(builder, size=m_si, per_layer=None).build(model, si, ball, eps / 4.0, seed)
    c_so = _replace(builder, size=m_so, per_layer=None).build(
        model, so, ball, eps / 4.0, so_seed
    )
    return WeightedDataset.union(c_si.data, c_so.data)


def run_static_bench(cfg: ExperimentConfig) -> tuple[list[BenchRow], dict]:
    """Build/solve benchmark over all configured methods and sizes."""
    raw, source_info = _load_data(cfg)
    raw, z = _apply_outliers(cfg, raw)
    model = model_from_json(cfg.model, raw.dim)
    train, held = _holdout_split(raw, cfg.holdout_frac, cfg.seed)
    provenance: dict = {
        "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "data": source_info,
        "n": len(train),
        "z": z,
        "package_version": _pkg_version,
        "numpy_version": np.__version__,
    }
    cells: dict[tuple[str, int], list[dict]] = {}
    for trial in range(cfg.trials):
        tseed = int(np.random.SeedSequence([cfg.seed, 31, trial]).generate_state(1)[0])
        ball, pilot_info = pilot_ball(
            model, train, cfg.pilot_frac, tseed, cfg.ell, cfg.continuity
        )
        if trial == 0:
            provenance["pilot"] = pilot_info
        t0 = time.perf_counter()
        full_report = fit_trimmed(model, train, z, seed=tseed, max_rounds=cfg.solver_max_rounds)
        t_full = time.perf_counter() - t0
        full_costs = dataset_costs(model, full_report.theta, train)
        f_full = trimmed_value(full_costs, train.w, train.ids, z)
        for bspec in cfg.builders:
            name = bspec["name"]
            size = int(bspec["size"])
            builder = BuilderSpec(name, size=size)
            method = f"{name}+" if cfg.robust else name
            t0 = time.perf_counter()
            if cfg.robust:
                core = budget_robust_coreset(model, train, ball, z, cfg.eps, builder, size, tseed)
            else:
                core = builder.build(model, train, ball, cfg.eps, tseed).data
            t_build = time.perf_counter() - t0
            t0 = time.perf_counter()
            core_report = fit_trimmed(
                model, core, z, seed=tseed, max_rounds=cfg.solver_max_rounds
            )
            t_solve = time.perf_counter() - t0
            core_costs = dataset_costs(model, core_report.theta, train)
            f_core = trimmed_value(core_costs, train.w, train.ids, z)
            cell = {
                "actual_size": len(core),
                "loss_ratio": f_core / f_full if f_full > 0 else float("inf"),
                "t_build": t_build,
                "t_solve_coreset": t_solve,
                "t_solve_full": t_full,
                "accuracy": _accuracy(core_report.theta, held) if held is not None else None,
            }
            cells.setdefault((method, size), []).append(cell)
    rows = []
    for (method, size), trials in sorted(cells.items()):
        mean = lambda key: float(np.mean([t[key] for t in trials]))  # noqa: E731
        t_build = mean("t_build")
        t_solve = mean("t_solve_coreset")
        t_full = mean("t_solve_full")
        rows.append(
            BenchRow(
                method=method,
                size=size,
                actual_size=mean("actual_size"),
                loss_ratio=mean("loss_ratio"),
                speedup=t_full / max(1e-12, t_build + t_solve),
                accuracy=mean("accuracy") if trials[0]["accuracy"] is not None else None,
                t_build=t_build,
                t_solve_coreset=t_solve,
                t_solve_full=t_full,
                trials=len(trials),
            )
        )
    return rows, provenance


def random_oplog(
    data: WeightedDataset,
    count: int,
    seed: int = 0,
    insert_frac: float = 0.7,
    delete_frac: float = 0.2,
    z0: float = 1.0,
    max_dz: int = 2,
) -> list[dict]:
    """Valid random op log: inserts jitter existing rows, deletes pick live
    ids, change-z stays within [1, n); fractions' remainder is change-z."""
    rng = np.random.default_rng([seed, 37])
    live = {int(i) for i in data.ids}
    feats = {int(data.ids[i]): data.X[i] for i in range(len(data))}
    next_id = max(live) + 1
    scale = float(np.std(data.X)) or 1.0
    z = float(z0)
    ops: list[dict] = []
    labeled = data.y is not None
    labels = {int(data.ids[i]): float(data.y[i]) for i in range(len(data))} if labeled else {}
    while len(ops) < count:
        u = rng.random()
        if u < insert_frac:
            base = int(rng.choice(sorted(live)))
            x = feats[base] + 0.1 * scale * rng.normal(0.0, 1.0, data.dim)
            op = {"op": "insert", "id": next_id, "features": [float(v) for v in x]}
            if labeled:
                op["label"] = labels[base]
            feats[next_id] = x
            if labeled:
                labels[next_id] = labels[base]
            live.add(next_id)
            next_id += 1
        elif u < insert_frac + delete_frac:
            if len(live) - 1 <= z + 1:
                continue
            pid = int(rng.choice(sorted(live)))
            op = {"op": "delete", "id": pid}
            live.discard(pid)
        else:
            dz = int(rng.integers(1, max_dz + 1)) * (1 if rng.random() < 0.5 else -1)
            if not (1 <= z + dz < len(live) - 1):
                continue
            z += dz
            op = {"op": "changez", "dz": dz}
        ops.append(op)
    return ops


def apply_op(dyn: DynamicRobustCoreset, op: dict):
    """Apply one parsed op-log entry to the structure."""
    kind = op["op"]
    if kind == "insert":
        return dyn.insert(WeightedPoint(int(op["id"]), op["features"], op.get("label")))
    if kind == "delete":
        return dyn.delete(int(op["id"]))
    if kind == "update":
        return dyn.update(WeightedPoint(int(op["id"]), op["features"], op.get("label")))
    if kind == "changez":
        return dyn.change_z(float(op["dz"]))
    raise ConfigError(f"unknown op {kind!r}")


def run_dynamic_bench(cfg: ExperimentConfig, ops: list[dict]) -> tuple[list[dict], dict]:
    """Replay an op log at each configured tree height.

    Bucket size at height h is n/2^(h-1).  Each series row records the
    touched-bucket and raw-point counters; every snapshot_every ops the
    current coreset and the live dataset are both solved and timed.
    """
    raw, source_info = _load_data(cfg)
    raw, z = _apply_outliers(cfg, raw)
    model = model_from_json(cfg.model, raw.dim)
    n0 = len(raw)
    series: list[dict] = []
    provenance: dict = {
        "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "data": source_info,
        "n0": n0,
        "z": z,
        "ops": len(ops),
        "package_version": _pkg_version,
        "numpy_version": np.__version__,
    }
    builder = BuilderSpec(cfg.builders[0]["name"], size=int(cfg.builders[0]["size"]))
    for h in cfg.heights:
        B = max(1, round(n0 / 2 ** (h - 1)))
        ball, pilot_info = pilot_ball(
            model, raw, cfg.pilot_frac, cfg.seed, cfg.ell, cfg.continuity
        )
        dyn = DynamicRobustCoreset.init(
            model, raw, ball, z, cfg.beta, cfg.eps, builder, bucket_size=B, seed=cfg.seed
        )
        if h == cfg.heights[0]:
            provenance["pilot"] = pilot_info
        provenance.setdefault("tree", {})[str(h)] = {
            "bucket_size": B,
            "slots": dyn.tree.S,
            "height": dyn.tree.height,
        }
        t_cum = 0.0
        for i, op in enumerate(ops):
            t0 = time.perf_counter()
            stats = apply_op(dyn, op)
            dt = time.perf_counter() - t0
            t_cum += dt
            row = {
                "h": h,
                "op_index": i + 1,
                "op": stats.op,
                "buckets_touched": stats.buckets_touched,
                "raw_points_touched": stats.raw_points_touched,
                "pool_moves": stats.pool_moves,
                "rebuilt": int(stats.rebuilt),
                "t_maintain": dt,
                "t_maintain_cum": t_cum,
                "t_solve_coreset": "",
                "t_solve_full": "",
            }
            if cfg.snapshot_every and (i + 1) % cfg.snapshot_every == 0:
                core = dyn.query().union()
                t0 = time.perf_counter()
                fit_trimmed(model, core, dyn.z, seed=cfg.seed, max_rounds=cfg.solver_max_rounds)
                row["t_solve_coreset"] = time.perf_counter() - t0
                t0 = time.perf_counter()
                fit_trimmed(
                    model, dyn.dataset(), dyn.z, seed=cfg.seed, max_rounds=cfg.solver_max_rounds
                )
                row["t_solve_full"] = time.perf_counter() - t0
            series.append(row)
    return series, provenance


_TIMING_COLUMNS = {
    "speedup",
    "t_build",
    "t_solve_coreset",
    "t_solve_full",
    "t_maintain",
    "t_maintain_cum",
}


def write_run_dir(
    outdir: str | Path,
    rows: list[BenchRow] | None,
    provenance: dict,
    series: dict[str, list[dict]] | None = None,
    render_plots: bool = True,
) -> Path:
    """Emit results.csv, provenance.json, series/*.csv and plots/*.svg."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    results_rows = []
    if rows:
        for r in rows:
            d = {k: getattr(r, k) for k in r.__dataclass_fields__}
            d["accuracy"] = "" if d["accuracy"] is None else d["accuracy"]
            results_rows.append(d)
    elif series:
        for name in sorted(series):
            results_rows.extend(series[name])
    if results_rows:
        with open(outdir / "results.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(results_rows[0]))
            writer.writeheader()
            writer.writerows(results_rows)
    with open(outdir / "provenance.json", "w") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    if series:
        sdir = outdir / "series"
        sdir.mkdir(exist_ok=True)
        for name in sorted(series):
            rows_ = series[name]
            if not rows_:
                continue
            with open(sdir / f"{name}.csv", "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows_[0]))
                writer.writeheader()
                writer.writerows(rows_)
    if render_plots:
        from .plots import plot_dynamic_series, plot_metric_by_size

        pdir = outdir / "plots"
        if rows:
            dict_rows = [{k: getattr(r, k) for k in r.__dataclass_fields__} for r in rows]
            plot_metric_by_size(dict_rows, "loss_ratio", pdir / "loss_ratio.svg", "loss ratio")
            plot_metric_by_size(dict_rows, "speedup", pdir / "speedup.svg", "speedup")
        if series and "dynamic" in series and series["dynamic"]:
            plot_dynamic_series(series["dynamic"], pdir / "dynamic.svg")
    return outdir


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")
