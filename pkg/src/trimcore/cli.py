"""Command line interface.

Subcommands: ingest, synth, build, solve, sensitivity, dynamic, bench.
Exit codes: 0 success, 2 configuration/format error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    apply_op,
    config_from_json,
    pilot_ball,
    run_dynamic_bench,
    run_static_bench,
    write_run_dir,
)
from .builders import BuilderSpec, Coreset
from .dynamic import DynamicRobustCoreset
from .errors import ConfigError, DataFormatError, NumericalError, TrimcoreError
from .io import (
    read_coreset_csv,
    read_dataset_csv,
    read_manifest,
    read_oplog,
    write_coreset,
    write_dataset_csv,
    write_manifest,
    write_sensitivity,
)
from .losses import model_from_json
from .robust import build_robust
from .sensitivity import sensitivity_lipschitz, sensitivity_qfp
from .solvers import fit_trimmed
from .synth import inject_outliers, synth_generate

__all__ = ["main"]


def _load_data(path: str):
    """Dataset CSV, coreset CSV (sniffed by header), or manifest JSON."""
    p = Path(path)
    if p.suffix == ".json":
        manifest = read_manifest(p)
        return read_dataset_csv(p.parent / manifest["path"])
    if not p.exists():
        raise ConfigError(f"data file not found: {p}")
    with open(p) as fh:
        header = fh.readline().strip().split(",")
    if header[:2] == ["id", "w"]:
        return read_coreset_csv(p)
    return read_dataset_csv(p)


def _load_model(path: str, dim: int):
    return model_from_json(Path(path), dim)


def _ball_for(args, model, data):
    ball, info = pilot_ball(
        model,
        data,
        frac=args.pilot_frac,
        seed=args.seed,
        ell=args.ell,
        kind=args.continuity,
    )
    return ball, info


def _add_ball_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pilot-frac", type=float, default=0.01, help="pilot sample fraction")
    p.add_argument("--ell", type=float, default=None, help="ball radius (default: pilot drift)")
    p.add_argument(
        "--continuity",
        choices=["lipschitz", "smooth", "lipschitz_hessian"],
        default="lipschitz",
    )


def _cmd_ingest(args) -> int:
    data = read_dataset_csv(args.data)
    out = Path(args.out)
    if out.suffix == ".json":
        raise ConfigError("ingest --out is the dataset CSV; the .json name is taken by the manifest sidecar")
    write_dataset_csv(out, data)
    write_manifest(out.with_suffix(".json"), data, out.name)
    print(f"ingested {len(data)} points (dim {data.dim}) -> {out}")
    return 0


def _cmd_synth(args) -> int:
    extra = {}
    if args.k is not None:
        extra["k"] = args.k
    if args.separation is not None:
        extra["separation"] = args.separation
    if args.noise is not None:
        extra["noise"] = args.noise
    data, params = synth_generate(args.kind, args.n, args.dim, seed=args.seed, **extra)
    if args.outliers:
        mode = "supervised" if data.y is not None else "clustering"
        data = inject_outliers(data, args.outliers, mode, seed=args.seed, sigma=args.sigma)
        params["outliers"] = {"count": args.outliers, "mode": mode, "sigma": args.sigma}
    out = Path(args.out)
    write_dataset_csv(out, data)
    write_manifest(out.with_suffix(".json"), data, out.name, generator=params)
    print(f"wrote {len(data)} points -> {out}")
    return 0


def _cmd_build(args) -> int:
    data = _load_data(args.data)
    model = _load_model(args.model, data.dim)
    ball, info = _ball_for(args, model, data)
    builder = BuilderSpec(args.builder, size=args.size)
    out = Path(args.out)
    if args.robust:
        if args.z is None:
            raise ConfigError("--robust needs --z")
        rc = build_robust(
            model,
            data,
            ball,
            args.z,
            args.beta,
            args.eps,
            builder,
            seed=args.seed,
            fz_lower=args.fz_lower,
        )
        union = rc.union()
        core = Coreset(union, args.builder, dict(rc.provenance, pilot=info), args.seed, len(data))
    else:
        built = builder.build(model, data, ball, args.eps, args.seed)
        core = Coreset(
            built.data,
            built.builder,
            dict(built.params, pilot=info),
            built.seed,
            built.source_size,
        )
    write_coreset(out, out.with_suffix(".provenance.json"), core)
    print(f"coreset of {len(core.data)} points -> {out}")
    return 0


def _cmd_solve(args) -> int:
    data = _load_data(args.data)
    model = _load_model(args.model, data.dim)
    report = fit_trimmed(model, data, args.z, seed=args.seed, max_rounds=args.max_rounds)
    payload = {
        "theta": np.asarray(report.theta, dtype=np.float64).tolist(),
        "trimmed_loss": report.trimmed_loss,
        "iterations": report.iterations,
        "converged": report.converged,
        "wall_time": report.wall_time,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_sensitivity(args) -> int:
    data = _load_data(args.data)
    model = _load_model(args.model, data.dim)
    if args.method == "qfp" and args.continuity == "lipschitz":
        args.continuity = "smooth"
    ball, _ = _ball_for(args, model, data)
    if args.method == "qfp":
        profile = sensitivity_qfp(model, data, ball)
    else:
        profile = sensitivity_lipschitz(model, data, ball)
    out = Path(args.out)
    write_sensitivity(out, out.with_suffix(".json"), profile)
    print(f"S = {profile.S:.6g} ({profile.method}) -> {out}")
    return 0


def _cmd_dynamic(args) -> int:
    data = _load_data(args.data)
    model = _load_model(args.model, data.dim)
    ops = read_oplog(args.oplog)
    ball, _ = _ball_for(args, model, data)
    builder = BuilderSpec(args.builder, size=args.size)
    dyn = DynamicRobustCoreset.init(
        model,
        data,
        ball,
        args.z,
        args.beta,
        args.eps,
        builder,
        bucket_size=args.bucket_size,
        seed=args.seed,
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    import csv as _csv

    with open(outdir / "ops.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(
            ["op_index", "op", "buckets_touched", "raw_points_touched", "pool_moves", "rebuilt"]
        )
        for i, op in enumerate(ops):
            stats = apply_op(dyn, op)
            writer.writerow(
                [
                    i + 1,
                    stats.op,
                    stats.buckets_touched,
                    stats.raw_points_touched,
                    stats.pool_moves,
                    int(stats.rebuilt),
                ]
            )
            if args.snapshot_every and (i + 1) % args.snapshot_every == 0:
                rc = dyn.query()
                union = rc.union()
                core = Coreset(union, args.builder, rc.provenance, args.seed, dyn.n)
                stem = outdir / f"coreset_{i + 1:06d}"
                write_coreset(
                    stem.with_suffix(".csv"), stem.with_suffix(".provenance.json"), core
                )
    print(f"replayed {len(ops)} ops -> {outdir}")
    return 0


def _cmd_bench(args) -> int:
    overrides = {"seed": args.seed, "trials": args.trials}
    cfg = config_from_json(args.config, **overrides)
    if args.mode == "dynamic":
        if not args.oplog:
            raise ConfigError("bench --mode dynamic needs --oplog")
        ops = read_oplog(args.oplog)
        series, provenance = run_dynamic_bench(cfg, ops)
        write_run_dir(args.out, None, provenance, {"dynamic": series})
    else:
        rows, provenance = run_static_bench(cfg)
        write_run_dir(args.out, rows, provenance)
    print(f"bench results -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trimcore",
        description="Coresets for continuous-and-bounded learning with outliers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a dataset CSV and write a manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=["mixture", "logistic"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--separation", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--outliers", type=int, default=0, help="inject this many outliers")
    p.add_argument("--sigma", type=float, default=200.0, help="outlier noise scale")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("build", help="build a coreset (plain or robust)")
    p.add_argument("--data", required=True, help="dataset CSV or manifest JSON")
    p.add_argument("--model", required=True, help="model descriptor JSON")
    p.add_argument("--builder", choices=["uniform", "importance", "gsp"], default="uniform")
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--robust", action="store_true")
    p.add_argument("--z", type=float, default=None)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--fz-lower", type=float, default=None)
    _add_ball_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("solve", help="trimmed solve on a dataset or coreset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--max-rounds", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sensitivity", help="per-point sensitivity bounds")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=["lipschitz", "qfp"], default="lipschitz")
    p.add_argument("--seed", type=int, default=0)
    _add_ball_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sensitivity)

    p = sub.add_parser("dynamic", help="replay an op log against the dynamic structure")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--oplog", required=True)
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--builder", choices=["uniform", "importance", "gsp"], default="uniform")
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--bucket-size", type=int, required=True)
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    _add_ball_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dynamic)

    p = sub.add_parser("bench", help="run a benchmark config")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON")
    p.add_argument("--mode", choices=["static", "dynamic"], default="static")
    p.add_argument("--oplog", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except TrimcoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
