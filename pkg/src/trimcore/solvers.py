"""Trimmed solvers: alternating fit/trim, local-search seeding, k-means--.

All solvers minimize the trimmed objective f_z(theta, X): alternately trim
weight z of the costliest points at the current parameter and fit on the
remainder.  The reported trimmed loss is monotonically non-increasing across
rounds; a proposed step that would increase it is damped by repeated halving
toward the previous parameter and the solver stops when no improving step
remains or the trimmed set repeats.

All randomness flows through the seed; runs are deterministic given
(arrays, z, theta0, seed), so fitting an identity coreset (same rows in the
same order) reproduces the fit on the original data bit for bit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import WeightedDataset
from .errors import ConfigError
from .losses import LossModel, dataset_costs, gradient_matrix
from .trim import _kept_weights

__all__ = [
    "SolveReport",
    "pilot_theta",
    "trimmed_fit",
    "local_search_seed",
    "kmeans_mm",
    "fit_trimmed",
]

_GD_MAX_ITER = 200
_GD_TOL = 1e-6
_WEISZFELD_INNER = 10
_LLOYD_INNER = 10
_IMPROVE_FACTOR = 1e-3
_MAX_SWAPS = 20
_FIT_RESTARTS = 5


@dataclass
class SolveReport:
    """Result of a trimmed fit."""

    theta: np.ndarray
    trimmed_loss: float
    iterations: int
    converged: bool
    wall_time: float
    trace: list[np.ndarray] = field(default_factory=list)


def _rng(seed: int | None, *tags: int) -> np.random.Generator:
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng([int(seed), *map(int, tags)])


def _sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(X * X, axis=1)[:, None]
        - 2.0 * X @ centers.T
        + np.sum(centers * centers, axis=1)[None, :]
    )
    np.maximum(sq, 0.0, out=sq)
    return sq


def _trimmed_sum_fast(costs: np.ndarray, w: np.ndarray, z: float) -> float:
    """f_z from costs without a full sort.

    The trimmed set lives among the top-M costs where M points suffice to
    accumulate weight z (M = ceil(z / min positive weight)); only that slice
    is sorted.  The value is tie-independent, so this matches trimmed_value.
    """
    if z <= 0.0:
        return float(np.dot(w, costs))
    pos = w > 0
    if not pos.all():
        costs, w = costs[pos], w[pos]
    n = costs.shape[0]
    w_min = float(w.min())
    M = min(n, int(math.ceil(z / w_min)) + 1)
    if M >= n:
        order = np.argsort(-costs)
    else:
        top = np.argpartition(costs, n - M)[n - M :]
        order = top[np.argsort(-costs[top])]
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, z, side="left"))
    trimmed_mass = float(np.dot(w[order[:k]], costs[order[:k]]))
    prev = float(cum[k - 1]) if k > 0 else 0.0
    trimmed_mass += (z - prev) * float(costs[order[k]])
    return float(np.dot(w, costs)) - trimmed_mass


def _kmeanspp(
    X: np.ndarray,
    w: np.ndarray,
    k: int,
    rng: np.random.Generator,
    ids: np.ndarray | None = None,
    z: float = 0.0,
) -> np.ndarray:
    """D^2 seeding; with z > 0 the current top-z cost mass gets zero seeding
    probability, so gross outliers cannot claim centers."""
    n = X.shape[0]
    total = float(w.sum())
    first = int(rng.choice(n, p=w / total))
    centers = [X[first]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        probe = w if z <= 0.0 else _kept_weights(d2, w, ids, z)
        mass = float(np.dot(probe, d2))
        if mass <= 0:
            idx = int(rng.choice(n))
        else:
            idx = int(rng.choice(n, p=probe * d2 / mass))
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - centers[-1]) ** 2, axis=1))
    return np.stack(centers)


def _gd_fit(
    model: LossModel,
    data: WeightedDataset,
    kept_w: np.ndarray,
    theta: np.ndarray,
    max_iter: int,
    tol: float,
) -> np.ndarray:
    """Weighted batch gradient descent with Armijo backtracking."""
    W = max(float(kept_w.sum()), 1e-300)

    def value(t: np.ndarray) -> float:
        return float(np.dot(kept_w, dataset_costs(model, t, data)))

    v = value(theta)
    step = 1.0
    for _ in range(max_iter):
        g = kept_w @ gradient_matrix(model, theta, data.X, data.y)
        gn = float(np.linalg.norm(g))
        if gn / W <= tol:
            break
        accepted = False
        s = step
        for _ in range(40):
            cand = theta - s * g
            vc = value(cand)
            if vc <= v - 1e-4 * s * gn * gn:
                theta, v = cand, vc
                step = min(s * 2.0, 1e6)
                accepted = True
                break
            s *= 0.5
        if not accepted:
            break
    return theta


def _lloyd_fit(
    model: LossModel,
    data: WeightedDataset,
    kept_w: np.ndarray,
    theta: np.ndarray,
    inner: int = _LLOYD_INNER,
) -> np.ndarray:
    centers = model.centers(theta).copy()
    prev_assign = None
    for _ in range(inner):
        sq = _sq_dists(data.X, centers)
        assign = sq.argmin(axis=1)
        costs = sq[np.arange(len(data)), assign]
        for j in range(model.k):
            mask = assign == j
            mass = float(kept_w[mask].sum())
            if mass <= 0:
                # empty cluster: restart it at the costliest kept point
                live = kept_w > 0
                idx = int(np.flatnonzero(live)[np.argmax(costs[live])])
                centers[j] = data.X[idx]
            else:
                centers[j] = (kept_w[mask] @ data.X[mask]) / mass
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign
    return centers.reshape(-1)


def _weiszfeld_fit(
    model: LossModel,
    data: WeightedDataset,
    kept_w: np.ndarray,
    theta: np.ndarray,
    inner: int = _WEISZFELD_INNER,
) -> np.ndarray:
    centers = model.centers(theta).copy()
    sq = _sq_dists(data.X, centers)
    assign = sq.argmin(axis=1)
    for j in range(model.k):
        mask = (assign == j) & (kept_w > 0)
        if not mask.any():
            continue
        Xj = data.X[mask]
        wj = kept_w[mask]
        c = centers[j]
        for _ in range(inner):
            d = np.linalg.norm(Xj - c, axis=1)
            # skip the exact-data-point fixed point instead of dividing by 0
            if np.any(d < 1e-12):
                break
            inv = wj / d
            c = (inv @ Xj) / float(inv.sum())
        centers[j] = c
    return centers.reshape(-1)


def _default_theta0(model: LossModel, data: WeightedDataset, seed: int | None) -> np.ndarray:
    if model.kind in ("kmedian", "kmeans"):
        return _kmeanspp(data.X, data.w, model.k, _rng(seed, 23)).reshape(-1)
    if model.kind == "logistic":
        return np.zeros(model.param_dim)
    return (data.w @ data.X) / data.total_weight


def trimmed_fit(
    model: LossModel,
    data: WeightedDataset,
    z: float,
    theta0: np.ndarray | None = None,
    max_rounds: int = 50,
    seed: int | None = 0,
    gd_max_iter: int = _GD_MAX_ITER,
    gd_tol: float = _GD_TOL,
) -> SolveReport:
    """Alternating trim / fit for any loss kind.

    Per round the weight-z trim at the current parameter fixes kept weights,
    the kind-specific inner fit runs on them (batch GD with backtracking for
    the smooth losses, Lloyd steps for k-means, Weiszfeld iterations for
    k-median), and the result is accepted only if the trimmed loss does not
    increase (damping by halving otherwise).  Stops when the trimmed set
    repeats, no improving step remains, or max_rounds is hit.
    """
    t_start = time.perf_counter()
    if theta0 is None:
        theta = _default_theta0(model, data, seed)
    else:
        theta = np.asarray(theta0, dtype=np.float64).reshape(-1).copy()
    if model.kind == "kmeans":
        inner = _lloyd_fit
    elif model.kind == "kmedian":
        inner = _weiszfeld_fit
    else:
        inner = lambda m, d, kw, t: _gd_fit(m, d, kw, t, gd_max_iter, gd_tol)

    costs = dataset_costs(model, theta, data)
    kept = _kept_weights(costs, data.w, data.ids, z) if z > 0 else data.w.copy()
    fz = float(np.dot(kept, costs))
    trace = [theta.copy()]
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        proposal = inner(model, data, kept, theta)
        accepted = False
        s = 1.0
        for _ in range(30):
            cand = theta + s * (proposal - theta) if s < 1.0 else proposal
            cand_costs = dataset_costs(model, cand, data)
            cand_kept = _kept_weights(cand_costs, data.w, data.ids, z) if z > 0 else data.w.copy()
            cand_fz = float(np.dot(cand_kept, cand_costs))
            if cand_fz <= fz:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            converged = True
            break
        stable = np.array_equal(cand_kept, kept)
        no_progress = fz - cand_fz <= 1e-12 * max(1.0, abs(fz))
        theta, kept, fz = cand, cand_kept, cand_fz
        trace.append(theta.copy())
        if stable and no_progress:
            converged = True
            break
    return SolveReport(
        theta=theta,
        trimmed_loss=fz,
        iterations=rounds,
        converged=converged,
        wall_time=time.perf_counter() - t_start,
        trace=trace,
    )


def local_search_seed(
    data: WeightedDataset,
    k: int,
    z: float,
    seed: int | None = 0,
    candidate_pool: int = 64,
    max_swaps: int = _MAX_SWAPS,
    improve_factor: float = _IMPROVE_FACTOR,
) -> np.ndarray:
    """k-means++ seeding followed by single-swap local search on f_z.

    A swap (replace one center by a candidate point) is accepted when it
    shrinks the trimmed k-means cost by a (1 - improve_factor) factor; at
    most max_swaps swaps are applied.  Returns (k, d) centers.
    """
    if not 1 <= k <= len(data):
        raise ConfigError(f"k={k} outside [1, {len(data)}]")
    rng = _rng(seed, 31)
    X, w = data.X, data.w
    n = X.shape[0]
    centers = _kmeanspp(X, w, k, rng, data.ids, z)

    def two_smallest(cen: np.ndarray):
        sq = _sq_dists(X, cen)
        assign = sq.argmin(axis=1)
        d1 = sq[np.arange(n), assign]
        if cen.shape[0] == 1:
            d2 = np.full(n, np.inf)
        else:
            part = np.partition(sq, 1, axis=1)
            d2 = part[:, 1]
        return assign, d1, d2

    assign, d1, d2 = two_smallest(centers)
    current = _trimmed_sum_fast(d1, w, z)
    if candidate_pool >= n:
        candidates = np.arange(n)
    else:
        candidates = rng.choice(n, size=candidate_pool, replace=False)

    swaps = 0
    while swaps < max_swaps:
        improved = False
        for row in candidates:
            dy = np.sum((X - X[row]) ** 2, axis=1)
            for j in range(k):
                base = np.where(assign == j, d2, d1)
                val = _trimmed_sum_fast(np.minimum(base, dy), w, z)
                if val <= (1.0 - improve_factor) * current:
                    centers[j] = X[row]
                    assign, d1, d2 = two_smallest(centers)
                    current = _trimmed_sum_fast(d1, w, z)
                    swaps += 1
                    improved = True
                    break
            if improved:
                break
        if not improved:
            break
    return centers


def kmeans_mm(
    data: WeightedDataset,
    k: int,
    z: float,
    centers0: np.ndarray,
    max_rounds: int = 50,
) -> SolveReport:
    """k-means--: Lloyd iterations that ignore the weight-z costliest points.

    Each round trims at the current centers, updates centers as weighted
    means of their kept members, and re-seeds any emptied cluster at the
    costliest kept point.  The trimmed loss never increases; stops when the
    trimmed set and assignments repeat or max_rounds is hit.
    """
    t_start = time.perf_counter()
    centers = np.asarray(centers0, dtype=np.float64).reshape(k, -1).copy()
    if centers.shape[1] != data.dim:
        raise ConfigError(f"centers dim {centers.shape[1]} != data dim {data.dim}")
    n = len(data)
    model = LossModel("kmeans", dim=data.dim, k=k)
    theta = centers.reshape(-1)
    costs = dataset_costs(model, theta, data)
    kept = _kept_weights(costs, data.w, data.ids, z) if z > 0 else data.w.copy()
    fz = float(np.dot(kept, costs))
    trace = [theta.copy()]
    prev_assign = None
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        sq = _sq_dists(data.X, centers)
        assign = sq.argmin(axis=1)
        point_costs = sq[np.arange(n), assign]
        new_centers = centers.copy()
        for j in range(k):
            mask = assign == j
            mass = float(kept[mask].sum())
            if mass <= 0:
                live = kept > 0
                idx = int(np.flatnonzero(live)[np.argmax(point_costs[live])])
                new_centers[j] = data.X[idx]
            else:
                new_centers[j] = (kept[mask] @ data.X[mask]) / mass
        cand = new_centers.reshape(-1)
        cand_costs = dataset_costs(model, cand, data)
        cand_kept = _kept_weights(cand_costs, data.w, data.ids, z) if z > 0 else data.w.copy()
        cand_fz = float(np.dot(cand_kept, cand_costs))
        if cand_fz > fz:
            # damp toward the previous centers until non-increasing
            s, accepted = 0.5, False
            while s > 1e-9:
                mid = theta + s * (cand - theta)
                mid_costs = dataset_costs(model, mid, data)
                mid_kept = _kept_weights(mid_costs, data.w, data.ids, z) if z > 0 else data.w.copy()
                mid_fz = float(np.dot(mid_kept, mid_costs))
                if mid_fz <= fz:
                    cand, cand_costs, cand_kept, cand_fz = mid, mid_costs, mid_kept, mid_fz
                    accepted = True
                    break
                s *= 0.5
            if not accepted:
                converged = True
                break
        stable = np.array_equal(cand_kept, kept) and (
            prev_assign is not None and np.array_equal(assign, prev_assign)
        )
        theta, kept, fz = cand, cand_kept, cand_fz
        centers = theta.reshape(k, -1)
        trace.append(theta.copy())
        prev_assign = assign
        if stable:
            converged = True
            break
    return SolveReport(
        theta=theta,
        trimmed_loss=fz,
        iterations=rounds,
        converged=converged,
        wall_time=time.perf_counter() - t_start,
        trace=trace,
    )


def pilot_theta(
    model: LossModel,
    data: WeightedDataset,
    frac: float = 0.01,
    seed: int | None = 0,
    return_report: bool = False,
):
    """Anchor parameter from an untrimmed fit on a small uniform subsample.

    The subsample holds max(20, 2 * param_dim, ceil(frac * n)) points (capped
    at n).  Deterministic given the seed; with return_report=True the full
    SolveReport (including the per-round trace) is returned alongside theta.
    """
    if not (0 < frac <= 1):
        raise ConfigError(f"pilot frac={frac} outside (0, 1]")
    n = len(data)
    m = min(n, max(20, 2 * model.param_dim, math.ceil(frac * n)))
    rows = _rng(seed, 41).choice(n, size=m, replace=False)
    sub = data.subset(rows)
    report = trimmed_fit(model, sub, z=0.0, theta0=None, max_rounds=50, seed=seed)
    if return_report:
        return report.theta, report
    return report.theta


def _smooth_starts(
    model: LossModel, data: WeightedDataset, attempts: int, seed: int | None
) -> list[np.ndarray | None]:
    """Alternation starts for the non-clustering kinds (None = kind default).

    Logistic spreads along the label-signed unit-row centroid (row
    normalization keeps far outliers from steering the direction) at
    geometric norms; point-valued parameters get data-scale perturbations
    of the weighted mean.
    """
    starts: list[np.ndarray | None] = [None]
    if attempts <= 1:
        return starts
    norms = np.linalg.norm(data.X, axis=1)
    med = float(np.median(norms))
    if med <= 0:
        return starts
    if model.kind == "logistic" and data.y is not None:
        direction = (data.w / np.maximum(norms, 1e-12) ** 2) @ (data.y[:, None] * data.X)
        dn = float(np.linalg.norm(direction))
        if dn <= 0:
            return starts
        unit = direction / (dn * med)
        for j in range(attempts - 1):
            starts.append(unit * 2.0 ** (j + 1))
    else:
        base = (data.w @ data.X) / data.total_weight
        rng = _rng(seed, 47)
        for j in range(attempts - 1):
            g = rng.normal(size=base.shape[0])
            g /= max(float(np.linalg.norm(g)), 1e-12)
            starts.append(base + g * med * 2.0 ** (j - 1))
    return starts


def fit_trimmed(
    model: LossModel,
    data: WeightedDataset,
    z: float,
    seed: int | None = 0,
    max_rounds: int = 50,
    restarts: int | None = None,
) -> SolveReport:
    """Model-appropriate trimmed solve: local-search-seeded k-means-- for
    k-means, alternating fits otherwise (clustering seeds via local search).

    The trim/fit alternation only descends from wherever it starts, so every
    kind runs `restarts` attempts (default 5) from spread-out starts and
    keeps the best trimmed loss; wall_time covers all attempts.
    """
    attempts = _FIT_RESTARTS if restarts is None else max(1, restarts)
    t_start = time.perf_counter()
    best: SolveReport | None = None
    if model.kind in ("kmeans", "kmedian"):
        for i in range(attempts):
            s = seed if seed is None or i == 0 else seed + 7919 * i
            centers0 = local_search_seed(data, model.k, z, s)
            if model.kind == "kmeans":
                rep = kmeans_mm(data, model.k, z, centers0, max_rounds)
            else:
                rep = trimmed_fit(
                    model, data, z, theta0=centers0.reshape(-1), max_rounds=max_rounds, seed=s
                )
            if best is None or rep.trimmed_loss < best.trimmed_loss:
                best = rep
    else:
        starts = _smooth_starts(model, data, attempts, seed)
        if len(starts) == 1:
            best = trimmed_fit(model, data, z, theta0=starts[0], max_rounds=max_rounds, seed=seed)
        else:
            # screen every start cheaply, then spend the full round budget
            # only on the winner (descent continues from its screened theta)
            screen = min(5, max_rounds)
            winner: np.ndarray | None = None
            winner_val = math.inf
            for theta0 in starts:
                rep = trimmed_fit(model, data, z, theta0=theta0, max_rounds=screen, seed=seed)
                if rep.trimmed_loss < winner_val:
                    winner_val = rep.trimmed_loss
                    winner = rep.theta
            best = trimmed_fit(model, data, z, theta0=winner, max_rounds=max_rounds, seed=seed)
    best.wall_time = time.perf_counter() - t_start
    return best
