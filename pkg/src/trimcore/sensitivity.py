"""Sensitivity upper bounds for importance sampling.

The sensitivity of point i over a parameter ball is

    sigma_i = sup_theta  w_i f(theta, x_i) / f(theta, X),

and any upper bound s_i >= sigma_i is usable; the sample size scales with
S = sum_i s_i, so tighter bounds are better.

Two routes are provided:

- ``sensitivity_lipschitz``: a closed form from the Lipschitz transfer bound.
  The numerator loss can rise by at most xi(ell) anywhere in the ball and the
  denominator can fall by at most [[X]] xi(ell), so
  s_i = min(1, (f_i(theta~) + xi) w_i / (f(theta~, X) - [[X]] xi)).
- ``sensitivity_qfp``: for smooth losses, the numerator is over-approximated
  by an upper parabola and the denominator under-approximated by a lower
  parabola, giving a ratio of quadratics over the ball.  Its exact supremum
  is computed by Dinkelbach's method; each inner step is a trust-region
  subproblem solved by eigen-decomposition plus boundary root-finding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .data import ParamBall, WeightedDataset
from .errors import ConfigError, DegenerateBallError, NonConvergenceError
from .losses import LossModel, dataset_costs, gradient_matrix

__all__ = [
    "SensitivityProfile",
    "RadialQuadratic",
    "QfpInstance",
    "TrustRegionSolution",
    "minimize_quadratic_on_ball",
    "maximize_ratio_on_ball",
    "sensitivity_lipschitz",
    "sensitivity_qfp",
    "theoretical_sample_size",
]

DINKELBACH_TOL = 1e-8
DINKELBACH_MAX_ITER = 100
_S_FLOOR = 1e-12


@dataclass(frozen=True)
class SensitivityProfile:
    """Per-point sensitivity upper bounds, aligned with the dataset rows."""

    ids: np.ndarray
    s: np.ndarray
    method: str
    tol: float = 0.0

    def __post_init__(self) -> None:
        if np.any(self.s <= 0) or np.any(self.s > 1.0):
            raise ConfigError("sensitivities must lie in (0, 1]")

    @property
    def S(self) -> float:
        """Total sensitivity (sampling-size driver)."""
        return float(self.s.sum())

    @property
    def probabilities(self) -> np.ndarray:
        return self.s / self.S


@dataclass(frozen=True)
class RadialQuadratic:
    """q(x) = c0 + <g, x> + (curv / 2) ||x||^2."""

    c0: float
    g: np.ndarray
    curv: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "g", np.asarray(self.g, dtype=np.float64).reshape(-1))

    def __call__(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return float(self.c0 + self.g @ x + 0.5 * self.curv * (x @ x))

    def min_on_ball(self, radius: float) -> float:
        """Exact minimum over ||x|| <= radius (via the trust-region solver)."""
        A = self.curv * np.eye(self.g.shape[0])
        sol = minimize_quadratic_on_ball(A, self.g, radius)
        return sol.value + self.c0


@dataclass(frozen=True)
class QfpInstance:
    """A ratio of radial quadratics maximized over a ball of given radius."""

    num: RadialQuadratic
    den: RadialQuadratic
    radius: float


@dataclass(frozen=True)
class TrustRegionSolution:
    """Minimizer of (1/2) x^T A x + b^T x over ||x|| <= radius.

    Satisfies the KKT system (A + mu I) x = -b with mu >= 0 and
    mu (||x|| - radius) = 0; kkt_residual reports the stationarity residual
    plus the complementary-slackness defect.
    """

    x: np.ndarray
    mu: float
    value: float
    kkt_residual: float


def minimize_quadratic_on_ball(
    A: np.ndarray, b: np.ndarray, radius: float, tol: float = 1e-12
) -> TrustRegionSolution:
    """Globally minimize q(x) = (1/2) x^T A x + b^T x over ||x|| <= radius.

    A is symmetric (any inertia).  The method is the classical exact one:
    eigen-decompose A, then either take the interior Newton point (positive
    definite A, point inside the ball), solve the secular equation
    ||x(mu)|| = radius for the boundary multiplier by bracketed root-finding,
    or handle the hard case (b orthogonal to the bottom eigenspace) by moving
    along a bottom eigenvector to the boundary.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    d = b.shape[0]
    if A.shape != (d, d):
        raise ConfigError(f"quadratic shape mismatch: A {A.shape}, b {b.shape}")
    if radius <= 0:
        raise ConfigError(f"radius must be positive, got {radius}")
    lam, Q = np.linalg.eigh(A)
    bq = Q.T @ b
    lam_min = float(lam[0])
    scale = max(1.0, float(np.abs(lam).max()), float(np.linalg.norm(b)) / radius)

    def x_eig(mu: float) -> np.ndarray:
        return -bq / (lam + mu)

    def finish(x_e: np.ndarray, mu: float) -> TrustRegionSolution:
        x = Q @ x_e
        value = 0.5 * float(x @ (A @ x)) + float(b @ x)
        stat = float(np.linalg.norm(A @ x + mu * x + b))
        slack = abs(mu * (float(np.linalg.norm(x)) - radius))
        return TrustRegionSolution(x, mu, value, stat + slack)

    # Interior solution: A positive definite and Newton point inside the ball.
    if lam_min > 0:
        x0 = x_eig(0.0)
        if np.linalg.norm(x0) <= radius:
            return finish(x0, 0.0)

    mu_lo = max(0.0, -lam_min)
    bottom = lam - lam_min <= tol * scale

    # Hard case: b has no component in the bottom eigenspace and the pseudo
    # solution at mu = -lam_min is already inside the ball.
    if np.all(np.abs(bq[bottom]) <= tol * scale):
        shifted = lam + mu_lo
        x_t = np.zeros(d)
        free = ~bottom
        x_t[free] = -bq[free] / shifted[free]
        nrm = float(np.linalg.norm(x_t))
        if nrm <= radius:
            if mu_lo == 0.0 and nrm <= radius:
                return finish(x_t, 0.0)
            t = math.sqrt(max(radius * radius - nrm * nrm, 0.0))
            x_e = x_t.copy()
            x_e[int(np.argmax(bottom))] += t
            return finish(x_e, mu_lo)

    def secular(mu: float) -> float:
        return 1.0 / float(np.linalg.norm(x_eig(mu))) - 1.0 / radius

    # ||x(mu)|| decreases from above radius to below it on (mu_lo, inf); the
    # reciprocal form is close to linear, which suits Brent's method.
    lo = mu_lo + max(tol, 1e-14 * scale)
    while secular(lo) >= 0.0:
        # start is already past the crossing: tighten toward mu_lo
        if lo - mu_lo <= 1e-300:
            return finish(x_eig(lo), lo)
        lo = mu_lo + (lo - mu_lo) / 16.0
    hi = mu_lo + float(np.linalg.norm(b)) / radius + 1.0
    while secular(hi) <= 0.0:
        hi = mu_lo + 2.0 * (hi - mu_lo)
    mu = float(brentq(secular, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200))
    return finish(x_eig(mu), mu)


@dataclass
class DinkelbachResult:
    value: float
    argmax: np.ndarray
    iterations: int
    lambdas: list[float] = field(default_factory=list)


def maximize_ratio_on_ball(
    instance: QfpInstance,
    tol: float = DINKELBACH_TOL,
    max_iter: int = DINKELBACH_MAX_ITER,
) -> DinkelbachResult:
    """Exact supremum of num(x) / den(x) over ||x|| <= radius.

    Requires den > 0 on the whole ball (checked; DegenerateBallError

    otherwise).  Dinkelbach's scheme solves max num - lambda * den per
    iteration, a ball-constrained quadratic handled by the trust-region
    solver; the lambda sequence is strictly increasing and converges to the
    supremum.  Stops when the inner optimum drops to tol; raises
    NonConvergenceError after max_iter rounds.
    """
    num, den, radius = instance.num, instance.den, instance.radius
    if den.g.shape != num.g.shape:
        raise ConfigError("numerator/denominator dimension mismatch")
    den_min = den.min_on_ball(radius)
    if den_min <= 0.0:
        raise DegenerateBallError(
            f"ratio denominator reaches {den_min:.3e} inside the ball; "
            "shrink the ball radius"
        )
    d = num.g.shape[0]
    # den(0) = den.c0 >= den_min > 0, so the center ratio seeds lambda
    lam = num.c0 / den.c0
    lambdas = [float(lam)]
    x = np.zeros(d)
    for it in range(1, max_iter + 1):
        # maximize num - lam * den == minimize its negation
        curv = -(num.curv - lam * den.curv)
        g = -(num.g - lam * den.g)
        sol = minimize_quadratic_on_ball(curv * np.eye(d), g, radius)
        x = sol.x
        gap = (num(x) - lam * den(x))
        if gap <= tol:
            return DinkelbachResult(float(lam), x, it, lambdas)
        new_lam = num(x) / den(x)
        if not new_lam > lam:
            # numerically stalled at the optimum
            return DinkelbachResult(float(lam), x, it, lambdas)
        lam = new_lam
        lambdas.append(float(lam))
    raise NonConvergenceError(
        f"ratio maximization did not reach tol={tol} in {max_iter} iterations"
    )


def sensitivity_lipschitz(
    model: LossModel, data: WeightedDataset, ball: ParamBall
) -> SensitivityProfile:
    """Closed-form sensitivity bounds from the Lipschitz transfer argument.

    s_i = min(1, (f_i(theta~) + xi(ell)) * w_i / (f(theta~, X) - [[X]] xi)).
    Raises DegenerateBallError when the denominator is not positive (the ball
    is too large for the certified constants); shrink ell.
    """
    costs = dataset_costs(model, ball.center, data)
    xi_val = ball.xi()
    denom = float(np.dot(data.w, costs)) - data.total_weight * xi_val
    if denom <= 0.0:
        raise DegenerateBallError(
            f"f(theta~, X) - [[X]] xi(ell) = {denom:.3e} <= 0; shrink the ball radius"
        )
    s = np.minimum(1.0, np.maximum((costs + xi_val) * data.w / denom, _S_FLOOR))
    return SensitivityProfile(ids=data.ids.copy(), s=s, method="lipschitz")


def sensitivity_qfp(
    model: LossModel,
    data: WeightedDataset,
    ball: ParamBall,
    tol: float = DINKELBACH_TOL,
    max_iter: int = DINKELBACH_MAX_ITER,
) -> SensitivityProfile:
    """Per-point quadratic-ratio sensitivity bounds for smooth losses.

    With alpha the smoothness constant, for every Delta with ||Delta|| <= ell

        w_i f_i(theta~ + Delta) <= w_i [f_i + <g_i, Delta> + (alpha/2)||Delta||^2]
        f(theta~ + Delta, X)    >= F + <G, Delta> - (alpha [[X]] / 2)||Delta||^2,

    so the supremum of the quadratic ratio upper-bounds sigma_i.  Each
    supremum is computed exactly by Dinkelbach iteration.
    """
    if ball.continuity.kind != "smooth":
        raise ConfigError("sensitivity_qfp needs a smooth continuity certificate")
    alpha = ball.continuity.alpha
    costs = dataset_costs(model, ball.center, data)
    grads = gradient_matrix(model, ball.center, data.X, data.y)
    W = data.total_weight
    F = float(np.dot(data.w, costs))
    G = data.w @ grads
    den = RadialQuadratic(F, G, -alpha * W)
    den_min = den.min_on_ball(ball.radius)
    if den_min <= 0.0:
        raise DegenerateBallError(
            f"denominator lower parabola reaches {den_min:.3e} in the ball; "
            "shrink the ball radius"
        )
    s = np.empty(len(data))
    for i in range(len(data)):
        wi = data.w[i]
        num = RadialQuadratic(wi * costs[i], wi * grads[i], wi * alpha)
        res = maximize_ratio_on_ball(QfpInstance(num, den, ball.radius), tol, max_iter)
        s[i] = res.value
    s = np.minimum(1.0, np.maximum(s, _S_FLOOR))
    return SensitivityProfile(ids=data.ids.copy(), s=s, method="qfp", tol=tol)


def theoretical_sample_size(
    S: float,
    eps: float,
    eta: float,
    ddim: int | None = None,
    vcdim: int | None = None,
    c: float = 1.0,
) -> int:
    """Importance-sampling size guidance (guidance only; configs set sizes).

    Doubling-dimension form: ceil(c S^2/eps^2 (ddim ln(1/eps) + ln(1/eta))).
    VC form: ceil(c S/eps^2 (vcdim ln S + ln(1/eta))).  Natural logarithms.
    Exactly one of ddim/vcdim must be given; the result is floored at 1.
    """
    if (ddim is None) == (vcdim is None):
        raise ConfigError("pass exactly one of ddim / vcdim")
    if not (0 < eps) or not (0 < eta < 1) or S <= 0:
        raise ConfigError(f"invalid size parameters S={S}, eps={eps}, eta={eta}")
    if ddim is not None:
        raw = c * S * S / (eps * eps) * (ddim * math.log(1.0 / eps) + math.log(1.0 / eta))
    else:
        raw = c * S / (eps * eps) * (vcdim * math.log(max(S, 1.0)) + math.log(1.0 / eta))
    return max(1, math.ceil(raw))
