"""Weighted point sets and parameter balls.

A WeightedDataset is the array-backed container used everywhere: integer ids,
an (n, d) feature matrix, nonnegative weights, and optional labels.  Ids are
unique in ingested datasets; coresets built with replacement may repeat them,
so uniqueness is enforced only where stated.

A ParamBall fixes the region of parameter space a guarantee is quoted over:
a center theta~, a radius ell, and a continuity certificate for the loss
(Lipschitz, smooth, or Lipschitz-Hessian).  xi(ball) is the worst-case change
of a single point's loss across the ball.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "WeightedPoint",
    "WeightedDataset",
    "Continuity",
    "ParamBall",
    "xi",
]


@dataclass(frozen=True)
class WeightedPoint:
    """One weighted observation."""

    id: int
    features: np.ndarray
    label: float | None = None
    weight: float = 1.0

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "features", feats)
        if self.weight < 0:
            raise ConfigError(f"point {self.id}: negative weight {self.weight}")


class WeightedDataset:
    """Array-backed weighted point set.

    Attributes
    ----------
    ids : (n,) int64 array
    X : (n, d) float64 feature matrix
    w : (n,) float64 nonnegative weights with positive total
    y : optional (n,) float64 labels (classification uses -1/+1)
    """

    __slots__ = ("ids", "X", "w", "y")

    def __init__(
        self,
        ids: np.ndarray | Sequence[int],
        X: np.ndarray,
        w: np.ndarray | Sequence[float] | None = None,
        y: np.ndarray | Sequence[float] | None = None,
        require_unique_ids: bool = False,
    ) -> None:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        n = X.shape[0]
        if ids.shape[0] != n:
            raise ConfigError(f"ids/features length mismatch: {ids.shape[0]} vs {n}")
        if w is None:
            w = np.ones(n, dtype=np.float64)
        else:
            w = np.asarray(w, dtype=np.float64).reshape(-1)
            if w.shape[0] != n:
                raise ConfigError(f"weights length mismatch: {w.shape[0]} vs {n}")
        if n == 0:
            raise ConfigError("empty dataset")
        if np.any(w < 0):
            raise ConfigError("negative point weight")
        if not np.all(np.isfinite(X)):
            raise ConfigError("non-finite feature value")
        if float(w.sum()) <= 0:
            raise ConfigError("total weight must be positive")
        if y is not None:
            y = np.asarray(y, dtype=np.float64).reshape(-1)
            if y.shape[0] != n:
                raise ConfigError(f"labels length mismatch: {y.shape[0]} vs {n}")
        if require_unique_ids and np.unique(ids).shape[0] != n:
            raise ConfigError("duplicate point ids")
        self.ids = ids
        self.X = X
        self.w = w
        self.y = y

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def total_weight(self) -> float:
        """[[X]]: the total weight of the set."""
        return float(self.w.sum())

    @property
    def labeled(self) -> bool:
        return self.y is not None

    def point(self, i: int) -> WeightedPoint:
        label = None if self.y is None else float(self.y[i])
        return WeightedPoint(int(self.ids[i]), self.X[i].copy(), label, float(self.w[i]))

    def subset(self, index: np.ndarray) -> "WeightedDataset":
        """Rows selected by boolean mask or integer index array (order kept)."""
        index = np.asarray(index)
        y = None if self.y is None else self.y[index]
        return WeightedDataset(self.ids[index], self.X[index], self.w[index], y)

    def replace_weights(self, w: np.ndarray) -> "WeightedDataset":
        return WeightedDataset(self.ids, self.X, w, self.y)

    def copy(self) -> "WeightedDataset":
        y = None if self.y is None else self.y.copy()
        return WeightedDataset(self.ids.copy(), self.X.copy(), self.w.copy(), y)

    @classmethod
    def from_points(cls, points: Iterable[WeightedPoint]) -> "WeightedDataset":
        pts = list(points)
        if not pts:
            raise ConfigError("empty dataset")
        ids = [p.id for p in pts]
        X = np.stack([p.features for p in pts])
        w = [p.weight for p in pts]
        labels = [p.label for p in pts]
        y = None if all(v is None for v in labels) else [0.0 if v is None else v for v in labels]
        return cls(ids, X, w, y)

    @staticmethod
    def union(a: "WeightedDataset", b: "WeightedDataset") -> "WeightedDataset":
        """Concatenation; id multiplicity is allowed in evaluation containers."""
        if a.dim != b.dim:
            raise ConfigError(f"dimension mismatch in union: {a.dim} vs {b.dim}")
        if (a.y is None) != (b.y is None):
            ya = np.zeros(len(a)) if a.y is None else a.y
            yb = np.zeros(len(b)) if b.y is None else b.y
        else:
            ya, yb = a.y, b.y
        y = None if ya is None else np.concatenate([ya, yb])
        return WeightedDataset(
            np.concatenate([a.ids, b.ids]),
            np.vstack([a.X, b.X]),
            np.concatenate([a.w, b.w]),
            y,
        )


_CONTINUITY_KINDS = ("lipschitz", "smooth", "lipschitz_hessian")


@dataclass(frozen=True)
class Continuity:
    """Continuity certificate of the per-point loss over a ball.

    kind="lipschitz": alpha is the Lipschitz constant of theta -> f(theta, x).
    kind="smooth": alpha is the gradient's Lipschitz constant and grad_bound
    the largest gradient norm at the ball center.
    kind="lipschitz_hessian": hessian_bound bounds the Hessian norm at the
    center and alpha the Hessian's Lipschitz constant; grad_bound as above.
    """

    kind: str
    alpha: float
    grad_bound: float | None = None
    hessian_bound: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in _CONTINUITY_KINDS:
            raise ConfigError(f"unknown continuity kind {self.kind!r}")
        if not (self.alpha > 0) or not np.isfinite(self.alpha):
            raise ConfigError(f"continuity constant must be positive, got {self.alpha}")
        if self.kind in ("smooth", "lipschitz_hessian"):
            if self.grad_bound is None or self.grad_bound < 0:
                raise ConfigError(f"{self.kind} continuity needs grad_bound >= 0")
        if self.kind == "lipschitz_hessian":
            if self.hessian_bound is None or self.hessian_bound < 0:
                raise ConfigError("lipschitz_hessian continuity needs hessian_bound >= 0")


@dataclass(frozen=True)
class ParamBall:
    """Ball B(center, radius) in parameter space with a continuity certificate.

    For clustering models the center is the concatenation of k centers and the
    ball is the product of k per-center balls under the metric
    max_i ||c_i - c'_i||.
    """

    center: np.ndarray
    radius: float
    continuity: Continuity

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "center", center)
        if not (self.radius > 0) or not np.isfinite(self.radius):
            raise ConfigError(f"ball radius must be positive, got {self.radius}")

    def xi(self) -> float:
        """Worst-case per-point loss change across the ball.

        lipschitz: alpha * ell
        smooth: h * ell + alpha * ell^2 / 2
        lipschitz_hessian: h * ell + H2 * ell^2 / 2 + alpha * ell^3 / 6
        """
        ell = self.radius
        c = self.continuity
        if c.kind == "lipschitz":
            return c.alpha * ell
        if c.kind == "smooth":
            return c.grad_bound * ell + 0.5 * c.alpha * ell * ell
        return (
            c.grad_bound * ell
            + 0.5 * c.hessian_bound * ell * ell
            + c.alpha * ell**3 / 6.0
        )


def xi(ball: ParamBall) -> float:
    """Functional alias for ParamBall.xi()."""
    return ball.xi()
