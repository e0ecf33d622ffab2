"""Loss models: per-point costs, gradients, and continuity certificates.

Supported kinds:

- "logistic": f(theta, (x, y)) = ln(1 + exp(-y <theta, x>)), y in {-1, +1}.
- "kmedian": f(Cen, x) = min_i ||c_i - x||; the parameter is k concatenated
  centers and the parameter metric is max_i ||c_i - c'_i||.
- "kmeans": f(Cen, x) = min_i ||c_i - x||^2, same parameter layout.
- "bregman": f(theta, x) = phi(theta) - phi(x) - <grad phi(x), theta - x>
  for a convex generator phi ("sqnorm" or "negentropy").
- "truth": f(theta, x) = t^2 if t < 1 else 1 + 2 ln t with t = ||theta - x||
  (continuous at t = 1).

Certificates bound |f(theta1, x) - f(theta2, x)| <= alpha * dist(theta1,
theta2) over the relevant region.  k-means is only ball-restricted Lipschitz,
so its certificate requires the ball.  Bregman generators have no global
constant either; a user-supplied gradient bound L gives alpha = 2L.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Continuity, ParamBall, WeightedDataset
from .errors import ConfigError

__all__ = [
    "LossModel",
    "LipschitzCertificate",
    "point_cost",
    "point_costs",
    "point_gradient",
    "gradient_matrix",
    "param_distance",
    "lipschitz_constant",
    "smooth_constants",
    "continuity_for",
    "model_to_json",
    "model_from_json",
]

_KINDS = ("logistic", "kmedian", "kmeans", "bregman", "truth")
_PHIS = ("sqnorm", "negentropy")

# Interior guard for the negative-entropy generator: coordinates are clamped
# to at least this value before logarithms.
NEGENTROPY_DOMAIN_EPS = 1e-9


@dataclass(frozen=True)
class LossModel:
    """Descriptor of a loss family over d-dimensional data."""

    kind: str
    dim: int
    k: int = 1
    phi: str | None = None
    bregman_L: float | None = None
    vcdim: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.kind in ("kmedian", "kmeans"):
            if self.k < 1:
                raise ConfigError(f"k must be >= 1, got {self.k}")
        elif self.k != 1:
            raise ConfigError(f"{self.kind} does not take k")
        if self.kind == "bregman":
            if self.phi not in _PHIS:
                raise ConfigError(f"bregman needs phi in {_PHIS}, got {self.phi!r}")
        elif self.phi is not None:
            raise ConfigError(f"{self.kind} does not take phi")

    @property
    def param_dim(self) -> int:
        if self.kind in ("kmedian", "kmeans"):
            return self.k * self.dim
        return self.dim

    @property
    def supervised(self) -> bool:
        return self.kind == "logistic"

    @property
    def vc_dimension(self) -> int:
        """Range-space dimension used to size uniform samples.

        Defaults: dim + 1 for logistic (halfspaces), k * (dim + 1) for the
        clustering families (unions of k balls), dim + 1 otherwise.  Override
        with the vcdim field.
        """
        if self.vcdim is not None:
            return self.vcdim
        if self.kind in ("kmedian", "kmeans"):
            return self.k * (self.dim + 1)
        return self.dim + 1

    def centers(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(theta, dtype=np.float64).reshape(self.k, self.dim)


@dataclass(frozen=True)
class LipschitzCertificate:
    """alpha and a note on what region/assumption it is certified over."""

    alpha: float
    basis: str


def _check_theta(model: LossModel, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.shape[0] != model.param_dim:
        raise ConfigError(
            f"parameter dimension {theta.shape[0]} != expected {model.param_dim}"
        )
    return theta


def _phi_value(phi: str, u: np.ndarray) -> np.ndarray:
    if phi == "sqnorm":
        return np.sum(u * u, axis=-1)
    u = np.maximum(u, NEGENTROPY_DOMAIN_EPS)
    return np.sum(u * np.log(u), axis=-1)


def _phi_grad(phi: str, u: np.ndarray) -> np.ndarray:
    if phi == "sqnorm":
        return 2.0 * u
    u = np.maximum(u, NEGENTROPY_DOMAIN_EPS)
    return 1.0 + np.log(u)


def point_costs(
    model: LossModel,
    theta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray | None = None,
) -> np.ndarray:
    """Vector of per-point losses f(theta, x_i) (weights not applied)."""
    theta = _check_theta(model, theta)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.dim:
        raise ConfigError(f"feature dimension {X.shape[1]} != model dim {model.dim}")
    if model.kind == "logistic":
        if y is None:
            raise ConfigError("logistic loss needs labels")
        margins = np.asarray(y, dtype=np.float64) * (X @ theta)
        return np.logaddexp(0.0, -margins)
    if model.kind in ("kmedian", "kmeans"):
        cen = model.centers(theta)
        # (n, k) squared distances without forming n*k*d intermediates
        sq = (
            np.sum(X * X, axis=1)[:, None]
            - 2.0 * X @ cen.T
            + np.sum(cen * cen, axis=1)[None, :]
        )
        np.maximum(sq, 0.0, out=sq)
        d2 = sq.min(axis=1)
        return d2 if model.kind == "kmeans" else np.sqrt(d2)
    if model.kind == "bregman":
        gx = _phi_grad(model.phi, X)
        diff = theta[None, :] - X
        return np.maximum(
            _phi_value(model.phi, theta) - _phi_value(model.phi, X) - np.sum(gx * diff, axis=1),
            0.0,
        )
    # truth discovery
    t = np.linalg.norm(theta[None, :] - X, axis=1)
    out = np.where(t < 1.0, t * t, 1.0 + 2.0 * np.log(np.maximum(t, 1.0)))
    return out


def point_cost(
    model: LossModel, theta: np.ndarray, x: np.ndarray, label: float | None = None
) -> float:
    y = None if label is None else np.asarray([label])
    return float(point_costs(model, theta, np.atleast_2d(x), y)[0])


def dataset_costs(model: LossModel, theta: np.ndarray, data: WeightedDataset) -> np.ndarray:
    if model.supervised and data.y is None:
        raise ConfigError("model is supervised but dataset has no labels")
    return point_costs(model, theta, data.X, data.y)


def point_gradient(
    model: LossModel, theta: np.ndarray, x: np.ndarray, label: float | None = None
) -> np.ndarray:
    """Gradient of f(., x) at theta (a subgradient at assignment boundaries)."""
    theta = _check_theta(model, theta)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if model.kind == "logistic":
        if label is None:
            raise ConfigError("logistic loss needs labels")
        m = label * float(x @ theta)
        # sigmoid(-m) without overflow
        s = np.exp(-np.logaddexp(0.0, m))
        return (-label * s) * x
    if model.kind in ("kmedian", "kmeans"):
        cen = model.centers(theta)
        diff = cen - x[None, :]
        dist = np.linalg.norm(diff, axis=1)
        j = int(np.argmin(dist))
        g = np.zeros_like(cen)
        if model.kind == "kmeans":
            g[j] = 2.0 * diff[j]
        elif dist[j] > 0:
            g[j] = diff[j] / dist[j]
        return g.reshape(-1)
    if model.kind == "bregman":
        return _phi_grad(model.phi, theta) - _phi_grad(model.phi, x)
    diff = theta - x
    t = float(np.linalg.norm(diff))
    if t < 1.0:
        return 2.0 * diff
    return (2.0 / (t * t)) * diff


def gradient_matrix(
    model: LossModel,
    theta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray | None = None,
) -> np.ndarray:
    """(n, param_dim) stack of per-point gradients, vectorized per kind."""
    theta = _check_theta(model, theta)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    if model.kind == "logistic":
        if y is None:
            raise ConfigError("logistic loss needs labels")
        y = np.asarray(y, dtype=np.float64)
        m = y * (X @ theta)
        s = np.exp(-np.logaddexp(0.0, m))
        return (-y * s)[:, None] * X
    if model.kind in ("kmedian", "kmeans"):
        cen = model.centers(theta)
        sq = (
            np.sum(X * X, axis=1)[:, None]
            - 2.0 * X @ cen.T
            + np.sum(cen * cen, axis=1)[None, :]
        )
        np.maximum(sq, 0.0, out=sq)
        assign = sq.argmin(axis=1)
        G = np.zeros((n, model.k, model.dim))
        rows = np.arange(n)
        diff = cen[assign] - X
        if model.kind == "kmeans":
            G[rows, assign] = 2.0 * diff
        else:
            dist = np.sqrt(sq[rows, assign])
            safe = dist > 0
            G[rows[safe], assign[safe]] = diff[safe] / dist[safe, None]
        return G.reshape(n, -1)
    if model.kind == "bregman":
        return _phi_grad(model.phi, theta)[None, :] - _phi_grad(model.phi, X)
    diff = theta[None, :] - X
    t = np.linalg.norm(diff, axis=1)
    scale = np.where(t < 1.0, 2.0, 2.0 / np.maximum(t * t, 1.0))
    return scale[:, None] * diff


def param_distance(model: LossModel, theta1: np.ndarray, theta2: np.ndarray) -> float:
    """Parameter metric: Euclidean, or max over centers for clustering."""
    t1 = _check_theta(model, theta1)
    t2 = _check_theta(model, theta2)
    if model.kind in ("kmedian", "kmeans"):
        d = model.centers(t1) - model.centers(t2)
        return float(np.linalg.norm(d, axis=1).max())
    return float(np.linalg.norm(t1 - t2))


def lipschitz_constant(
    model: LossModel, data: WeightedDataset, ball: ParamBall | None = None
) -> LipschitzCertificate:
    """Certified Lipschitz constant of theta -> f(theta, x) over the data.

    k-means has no global constant; its bound holds inside the ball only and
    the ball is therefore required.  Bregman models require bregman_L (a bound
    on ||grad phi|| over the relevant domain), giving alpha = 2L.
    """
    if model.kind == "logistic":
        alpha = float(np.linalg.norm(data.X, axis=1).max())
        if alpha <= 0:
            alpha = 1.0
        return LipschitzCertificate(alpha, "max feature norm")
    if model.kind == "kmedian":
        return LipschitzCertificate(1.0, "triangle inequality, max-over-centers metric")
    if model.kind == "kmeans":
        if ball is None:
            raise ConfigError("kmeans certificate is ball-restricted; pass the ball")
        data_norm = float(np.linalg.norm(data.X, axis=1).max())
        cen_norm = float(np.linalg.norm(model.centers(ball.center), axis=1).max())
        alpha = 2.0 * (data_norm + cen_norm + ball.radius)
        return LipschitzCertificate(alpha, "ball-restricted: 2(max||x|| + max||c~|| + ell)")
    if model.kind == "bregman":
        if model.bregman_L is None:
            raise ConfigError("bregman certificate needs bregman_L (gradient bound)")
        return LipschitzCertificate(2.0 * model.bregman_L, "2L with user gradient bound L")
    return LipschitzCertificate(2.0, "truth-discovery loss has |f'| <= 2")


def bregman_sqnorm_gradient_bound(data: WeightedDataset, ball: ParamBall | None = None) -> float:
    """L = 2 * max(||x||, ||center|| + radius) for phi = squared norm."""
    bound = float(np.linalg.norm(data.X, axis=1).max())
    if ball is not None:
        bound = max(bound, float(np.linalg.norm(ball.center)) + ball.radius)
    return 2.0 * bound


def smooth_constants(
    model: LossModel, data: WeightedDataset, center: np.ndarray
) -> tuple[float, float]:
    """(alpha, h) for a smooth certificate: gradient Lipschitz constant and
    the largest gradient norm at the ball center.

    Supported for the everywhere-smooth families; clustering minima are only
    piecewise smooth and are rejected.
    """
    if model.kind == "logistic":
        nx = float((np.linalg.norm(data.X, axis=1) ** 2).max())
        alpha = nx / 4.0
    elif model.kind == "truth":
        alpha = 2.0
    elif model.kind == "bregman" and model.phi == "sqnorm":
        alpha = 2.0
    else:
        raise ConfigError(f"{model.kind} loss has no smooth certificate")
    G = gradient_matrix(model, center, data.X, data.y)
    h = float(np.linalg.norm(G, axis=1).max())
    return alpha, h


def continuity_for(
    model: LossModel,
    data: WeightedDataset,
    center: np.ndarray,
    kind: str = "lipschitz",
    ball_radius: float | None = None,
) -> Continuity:
    """Build a Continuity certificate of the requested kind for this model."""
    if kind == "lipschitz":
        ball = None
        if model.kind == "kmeans":
            if ball_radius is None:
                raise ConfigError("kmeans continuity needs ball_radius")
            ball = ParamBall(center, ball_radius, Continuity("lipschitz", 1.0))
        cert = lipschitz_constant(model, data, ball)
        return Continuity("lipschitz", cert.alpha)
    if kind == "smooth":
        alpha, h = smooth_constants(model, data, center)
        return Continuity("smooth", alpha, grad_bound=h)
    raise ConfigError(f"unsupported continuity kind {kind!r}")


def model_to_json(model: LossModel) -> dict:
    out: dict = {"kind": model.kind}
    if model.kind in ("kmedian", "kmeans"):
        out["k"] = model.k
    if model.kind == "bregman":
        out["phi"] = model.phi
        if model.bregman_L is not None:
            out["bregman_L"] = model.bregman_L
    if model.vcdim is not None:
        out["vcdim"] = model.vcdim
    return out


def model_from_json(obj: dict | str | Path, dim: int) -> LossModel:
    """Parse a model descriptor ({"kind", "k", "phi", "bregman_L"}) for
    dim-dimensional data."""
    if isinstance(obj, (str, Path)):
        with open(obj) as fh:
            obj = json.load(fh)
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("model descriptor must be an object with a 'kind' field")
    known = {"kind", "k", "phi", "bregman_L", "vcdim"}
    extra = set(obj) - known
    if extra:
        raise ConfigError(f"unknown model descriptor fields: {sorted(extra)}")
    return LossModel(
        kind=obj["kind"],
        dim=dim,
        k=int(obj.get("k", 1)),
        phi=obj.get("phi"),
        bregman_L=obj.get("bregman_L"),
        vcdim=obj.get("vcdim"),
    )
