"""Empirical quality checks shared by tests and the benchmark harness.

These evaluate guarantees directly: a theta grid over the parameter ball, the
worst relative coreset error on that grid, and the two-sided trimmed sandwich

    (1 - eps) f_{(1+beta) z}(theta, X) <= f_z(theta, C)
                                       <= (1 + eps) f_{(1-beta) z}(theta, X).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ParamBall, WeightedDataset
from .losses import LossModel, dataset_costs
from .trim import trimmed_value

__all__ = [
    "ball_grid",
    "max_relative_error",
    "SandwichReport",
    "sandwich_report",
    "tail_mass_holds",
]


def ball_grid(
    model: LossModel, ball: ParamBall, count: int, seed: int | None
) -> np.ndarray:
    """(count, param_dim) parameters in the ball, the center first.

    Clustering balls are products of per-center balls under the
    max-over-centers metric, so each center's offset is drawn independently;
    offsets are volume-uniform per ball.
    """
    rng = np.random.default_rng(seed)
    dp = model.param_dim
    if model.kind in ("kmedian", "kmeans"):
        blocks, bdim = model.k, model.dim
    else:
        blocks, bdim = 1, dp
    dirs = rng.normal(size=(count, blocks, bdim))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=2, keepdims=True), 1e-300)
    radii = ball.radius * rng.random((count, blocks, 1)) ** (1.0 / bdim)
    grid = ball.center[None, :] + (dirs * radii).reshape(count, dp)
    grid[0] = ball.center
    return grid


def max_relative_error(
    model: LossModel,
    data: WeightedDataset,
    coreset: WeightedDataset,
    ball: ParamBall,
    count: int = 200,
    seed: int | None = 0,
) -> float:
    """max over a theta grid of |f(theta, C) - f(theta, X)| / f(theta, X)."""
    worst = 0.0
    for theta in ball_grid(model, ball, count, seed):
        fx = float(np.dot(data.w, dataset_costs(model, theta, data)))
        fc = float(np.dot(coreset.w, dataset_costs(model, theta, coreset)))
        if fx <= 0:
            continue
        worst = max(worst, abs(fc - fx) / fx)
    return worst


@dataclass(frozen=True)
class SandwichReport:
    """Outcome of the trimmed sandwich over a theta grid.

    Slacks are normalized by f_z(theta, X); both are nonnegative iff the
    sandwich holds at every grid parameter.
    """

    passed: bool
    count: int
    worst_lower_slack: float
    worst_upper_slack: float


def sandwich_report(
    model: LossModel,
    data: WeightedDataset,
    coreset: WeightedDataset,
    ball: ParamBall,
    z: float,
    beta: float,
    eps: float,
    count: int = 200,
    seed: int | None = 0,
) -> SandwichReport:
    lo_slack = np.inf
    hi_slack = np.inf
    for theta in ball_grid(model, ball, count, seed):
        cx = dataset_costs(model, theta, data)
        cc = dataset_costs(model, theta, coreset)
        f_mid = trimmed_value(cx, data.w, data.ids, z)
        f_hi_trim = trimmed_value(cx, data.w, data.ids, (1.0 + beta) * z)
        f_lo_trim = trimmed_value(cx, data.w, data.ids, (1.0 - beta) * z)
        f_c = trimmed_value(cc, coreset.w, coreset.ids, z)
        norm = max(f_mid, 1e-300)
        lo_slack = min(lo_slack, (f_c - (1.0 - eps) * f_hi_trim) / norm)
        hi_slack = min(hi_slack, ((1.0 + eps) * f_lo_trim - f_c) / norm)
    return SandwichReport(
        passed=bool(lo_slack >= 0.0 and hi_slack >= 0.0),
        count=count,
        worst_lower_slack=float(lo_slack),
        worst_upper_slack=float(hi_slack),
    )


def tail_mass_holds(
    tau: float, z: float, eps0: float, fz_center: float
) -> tuple[bool, float, float]:
    """The split's tail bound: tau * z <= eps0 * f_z(theta~, X).

    Returns (holds, lhs, rhs) so callers can assert or report the margin.
    """
    lhs = tau * z
    rhs = eps0 * fz_center
    return (lhs <= rhs, lhs, rhs)
