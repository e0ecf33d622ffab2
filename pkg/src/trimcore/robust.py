"""Hybrid robust coresets: black-box coreset on suspected inliers plus a
uniform sample of suspected outliers.

Given trim weight z, accuracy eps, and outlier slack beta, the construction:

1. picks eps0 = min(eps/16, eps * F / (16 (W - z) xi(ell))) where F lower
   bounds inf f_z over the ball (from the transfer bound at theta~ unless the
   caller supplies one);
2. marks the z~ = ceil((1 + 1/eps0) z) most expensive points at theta~ as
   suspected outliers X_so (threshold cost tau), the rest X_si;
3. summarizes X_si with any eps/4 coreset builder, and X_so with a
   delta-sample at delta = beta * eps0 / (1 + eps0) (beta = 0 keeps X_so
   verbatim).

The union satisfies the two-sided trimmed sandwich with slack (beta, eps).
The split also guarantees tau * z <= eps0 * f_z(theta~, X): at least z/eps0
suspected outliers survive trimming z at theta~ and each costs at least tau.
That inequality is asserted on every build.

When z~ >= n the split degenerates: every point is suspected, the black-box
side is empty, and the whole construction is the delta-sample of X.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .builders import BuilderSpec, Coreset, delta_sample_size, uniform_sample
from .data import ParamBall, WeightedDataset
from .errors import ConfigError, NumericalError
from .losses import LossModel, dataset_costs
from .quality import tail_mass_holds
from .trim import trimmed_value

__all__ = [
    "RobustSplit",
    "RobustCoreset",
    "compute_eps0",
    "split",
    "build_robust",
    "robust_trimmed_eval",
    "quality_transfer_check",
    "QualityTransferReport",
]

FZ_LOWER_FLOOR = 1e-12


def _check_robust_params(z: float, beta: float, eps: float, total: float) -> None:
    if not (0 < z < total):
        raise ConfigError(f"z={z} outside (0, total weight {total})")
    if not (0 <= beta < 1):
        raise ConfigError(f"beta={beta} outside [0, 1)")
    if not (0 < eps < 1):
        raise ConfigError(f"eps={eps} outside (0, 1)")


def _eps0_details(
    model: LossModel,
    data: WeightedDataset,
    ball: ParamBall,
    z: float,
    eps: float,
    fz_lower: float | None,
) -> tuple[float, dict]:
    W = data.total_weight
    xi_val = ball.xi()
    costs = dataset_costs(model, ball.center, data)
    fz_center = trimmed_value(costs, data.w, data.ids, z)
    info: dict = {"fz_center": fz_center, "xi": xi_val}
    if fz_lower is not None:
        if fz_lower <= 0:
            raise ConfigError(f"fz_lower must be positive, got {fz_lower}")
        F = float(fz_lower)
        info["fz_lower_source"] = "supplied"
    else:
        # transfer bound: f_z moves by at most (W - z) xi across the ball
        F = fz_center - (W - z) * xi_val
        info["fz_lower_source"] = "transfer"
    fallback = F <= FZ_LOWER_FLOOR
    if fallback:
        warnings.warn(
            "lower bound on inf f_z is not positive; falling back to eps0 = eps/16",
            stacklevel=3,
        )
        eps0 = eps / 16.0
    else:
        eps0 = min(eps / 16.0, eps * F / (16.0 * (W - z) * xi_val)) if xi_val > 0 else eps / 16.0
    info.update({"fz_lower": max(F, FZ_LOWER_FLOOR), "fallback": fallback, "eps0": eps0})
    return eps0, info


def compute_eps0(
    model: LossModel,
    data: WeightedDataset,
    ball: ParamBall,
    z: float,
    eps: float,
    fz_lower: float | None = None,
) -> float:
    """eps0 = min(eps/16, eps F / (16 (W - z) xi(ell))), F = inf f_z bound."""
    _check_robust_params(z, 0.0, eps, data.total_weight)
    eps0, _ = _eps0_details(model, data, ball, z, eps, fz_lower)
    return eps0


@dataclass(frozen=True)
class RobustSplit:
    """Suspected-outlier split at the ball center."""

    eps0: float
    z_tilde: int
    tau: float
    so_rows: np.ndarray
    si_rows: np.ndarray
    degenerate: bool

    @property
    def so_count(self) -> int:
        return int(self.so_rows.shape[0])


def split(
    model: LossModel, data: WeightedDataset, ball: ParamBall, z: float, eps0: float
) -> RobustSplit:
    """Mark the z~ = ceil((1 + 1/eps0) z) most expensive points at theta~.

    Ties are broken by (cost desc, id asc, row asc), matching the trimming
    order; tau is the cheapest suspected outlier's cost.  z~ >= n degenerates
    to everything suspected.
    """
    n = len(data)
    if not (0 < eps0 < 1):
        raise ConfigError(f"eps0={eps0} outside (0, 1)")
    z_tilde = math.ceil((1.0 + 1.0 / eps0) * z)
    degenerate = z_tilde >= n
    z_tilde = min(z_tilde, n)
    costs = dataset_costs(model, ball.center, data)
    order = np.lexsort((np.arange(n), data.ids, -costs))
    so_rows = order[:z_tilde]
    si_rows = order[z_tilde:]
    tau = float(costs[so_rows[-1]])
    return RobustSplit(
        eps0=eps0,
        z_tilde=z_tilde,
        tau=tau,
        so_rows=np.sort(so_rows),
        si_rows=np.sort(si_rows),
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class RobustCoreset:
    """Union of a black-box inlier coreset and an outlier sample."""

    c_si: Coreset | None
    c_so: WeightedDataset
    split: RobustSplit
    z: float
    beta: float
    eps: float
    delta: float | None
    provenance: dict

    def union(self) -> WeightedDataset:
        if self.c_si is None:
            return self.c_so
        return WeightedDataset.union(self.c_si.data, self.c_so)

    @property
    def total_weight(self) -> float:
        return self.union().total_weight

    def __len__(self) -> int:
        return (0 if self.c_si is None else len(self.c_si)) + len(self.c_so)


def build_robust(
    model: LossModel,
    data: WeightedDataset,
    ball: ParamBall,
    z: float,
    beta: float,
    eps: float,
    builder: BuilderSpec,
    seed: int | None = 0,
    fz_lower: float | None = None,
    eta: float = 0.1,
    so_size: int | None = None,
) -> RobustCoreset:
    """Construct a (beta, eps)-robust coreset for trim weight z.

    The inlier side goes through ``builder`` at accuracy eps/4; the outlier
    side is kept verbatim when beta = 0 and otherwise delta-sampled at
    delta = beta eps0 / (1 + eps0), sized by delta_sample_size (or so_size
    when the caller fixes the budget).  The tail bound
    tau z <= eps0 f_z(theta~, X) is asserted on every build.
    """
    _check_robust_params(z, beta, eps, data.total_weight)
    eps0, info = _eps0_details(model, data, ball, z, eps, fz_lower)
    sp = split(model, data, ball, z, eps0)

    ok, lhs, rhs = tail_mass_holds(sp.tau, z, eps0, info["fz_center"])
    if not ok:
        raise NumericalError(
            f"tail bound violated on build: tau*z = {lhs:.6e} > eps0*f_z = {rhs:.6e}"
        )

    so_data = data.subset(sp.so_rows)
    delta: float | None = None
    if beta == 0.0:
        c_so = so_data
        so_m = len(so_data)
    else:
        delta = beta * eps0 / (1.0 + eps0)
        so_m = so_size or delta_sample_size(delta, model.vc_dimension, eta)
        so_m = min(so_m, len(so_data))
        c_so = uniform_sample(so_data, so_m, None if seed is None else seed + 1).data

    c_si: Coreset | None = None
    if sp.si_rows.shape[0] > 0:
        si_data = data.subset(sp.si_rows)
        c_si = builder.build(model, si_data, ball, eps / 4.0, seed)

    provenance = {
        "builder": builder.name,
        "z": z,
        "beta": beta,
        "eps": eps,
        "eps0": eps0,
        "z_tilde": sp.z_tilde,
        "tau": sp.tau,
        "delta": delta,
        "so_size": so_m,
        "si_size": 0 if c_si is None else len(c_si),
        "degenerate": sp.degenerate,
        "eps0_fallback": info["fallback"],
        "fz_lower": info["fz_lower"],
        "fz_lower_source": info["fz_lower_source"],
        "seed": seed,
        "source_size": len(data),
    }
    return RobustCoreset(
        c_si=c_si,
        c_so=c_so,
        split=sp,
        z=z,
        beta=beta,
        eps=eps,
        delta=delta,
        provenance=provenance,
    )


def robust_trimmed_eval(
    model: LossModel, theta: np.ndarray, coreset: RobustCoreset, z: float | None = None
) -> float:
    """f_z(theta, C) on the union of the two coreset sides."""
    union = coreset.union()
    costs = dataset_costs(model, theta, union)
    return trimmed_value(costs, union.w, union.ids, coreset.z if z is None else z)


@dataclass(frozen=True)
class QualityTransferReport:
    """Solving on the coreset vs. solving on the data.

    theta_coreset minimizes f_{(1+2 beta) z} over C, theta_full minimizes f_z
    over X; passed means
    f_{(1+4 beta) z}(theta_coreset, X) <= (1 + 3 eps) f_z(theta_full, X).
    """

    passed: bool
    lhs: float
    rhs: float
    theta_coreset: np.ndarray
    theta_full: np.ndarray
    t_coreset: float
    t_full: float


def quality_transfer_check(
    model: LossModel,
    data: WeightedDataset,
    ball: ParamBall,
    coreset: RobustCoreset,
    solver,
    seed: int | None = 0,
) -> QualityTransferReport:
    """Run the same solver on C (trim (1+2 beta) z) and X (trim z), then test
    the transferred guarantee on the full data.

    ``solver(model, dataset, z, seed)`` must return the fitted parameter.
    """
    z, beta, eps = coreset.z, coreset.beta, coreset.eps
    union = coreset.union()
    t0 = time.perf_counter()
    theta_c = solver(model, union, (1.0 + 2.0 * beta) * z, seed)
    t_coreset = time.perf_counter() - t0
    t0 = time.perf_counter()
    theta_x = solver(model, data, z, seed)
    t_full = time.perf_counter() - t0
    costs_c = dataset_costs(model, theta_c, data)
    costs_x = dataset_costs(model, theta_x, data)
    lhs = trimmed_value(costs_c, data.w, data.ids, (1.0 + 4.0 * beta) * z)
    rhs = (1.0 + 3.0 * eps) * trimmed_value(costs_x, data.w, data.ids, z)
    return QualityTransferReport(
        passed=bool(lhs <= rhs),
        lhs=lhs,
        rhs=rhs,
        theta_coreset=theta_c,
        theta_full=theta_x,
        t_coreset=t_coreset,
        t_full=t_full,
    )
