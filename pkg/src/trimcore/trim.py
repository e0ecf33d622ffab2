"""Weighted objectives and trimmed objectives.

The trimmed objective f_z(theta, X) removes exactly weight z of the most
expensive points at theta: sort by (cost desc, id asc), peel weight off the
top, and split the boundary point fractionally so the removed mass is exactly
z.  Equivalently it is the minimum of f(theta, X \\ O) over weighted subsets O
of total weight z, which the sort attains.

Costs are compared exactly (no tolerance).  The kept sum is evaluated as a
dot product of the cost vector with a kept-weight vector in row order, so two
calls that keep the same rows produce bit-identical values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import WeightedDataset
from .errors import ConfigError
from .losses import LossModel, dataset_costs

__all__ = [
    "objective",
    "objective_value",
    "trimmed_objective",
    "trimmed_value",
    "trimmed_argmask",
    "TrimPartition",
]


def objective_value(costs: np.ndarray, w: np.ndarray) -> float:
    """Weighted sum of precomputed per-point costs."""
    return float(np.dot(w, costs))


def objective(model: LossModel, theta: np.ndarray, data: WeightedDataset) -> float:
    """f(theta, X) = sum_i w_i f(theta, x_i)."""
    return objective_value(dataset_costs(model, theta, data), data.w)


def _check_z(z: float, total: float) -> float:
    z = float(z)
    if not (0.0 <= z < total):
        raise ConfigError(f"trim weight z={z} outside [0, total weight {total})")
    return z


def _kept_weights(
    costs: np.ndarray, w: np.ndarray, ids: np.ndarray, z: float
) -> np.ndarray:
    """Weight vector after trimming weight z of the largest costs.

    Ties broken by (cost desc, id asc, row asc); the boundary point keeps the
    fractional remainder.  Returned in row order, elementwise <= w.
    """
    n = costs.shape[0]
    if z == 0.0:
        return w.copy()
    rows = np.arange(n)
    order = np.lexsort((rows, ids, -costs))
    cum = np.cumsum(w[order])
    # first position where the running mass reaches z; z < total so k < n
    k = int(np.searchsorted(cum, z, side="left"))
    kept = w.copy()
    kept[order[:k]] = 0.0
    # boundary point keeps cum[k] - z; exact when weights and z are integers
    kept[order[k]] = max(cum[k] - z, 0.0)
    return kept


def trimmed_value(costs: np.ndarray, w: np.ndarray, ids: np.ndarray, z: float) -> float:
    """f_z from precomputed costs (see trimmed_objective)."""
    total = float(w.sum())
    z = _check_z(z, total)
    kept = _kept_weights(costs, w, ids, z)
    return float(np.dot(kept, costs))


def trimmed_objective(
    model: LossModel, theta: np.ndarray, data: WeightedDataset, z: float
) -> float:
    """f_z(theta, X): weighted loss after trimming weight z off the top."""
    costs = dataset_costs(model, theta, data)
    return trimmed_value(costs, data.w, data.ids, z)


@dataclass(frozen=True)
class TrimPartition:
    """Row-aligned split of the weights into kept (inlier) and trimmed mass.

    inlier_weights + outlier_weights == w elementwise; outlier_weights sums
    to z (the boundary point may appear on both sides fractionally).
    """

    inlier_weights: np.ndarray
    outlier_weights: np.ndarray

    @property
    def outlier_rows(self) -> np.ndarray:
        return np.flatnonzero(self.outlier_weights > 0.0)

    @property
    def inlier_rows(self) -> np.ndarray:
        return np.flatnonzero(self.inlier_weights > 0.0)


def trimmed_argmask(
    model: LossModel, theta: np.ndarray, data: WeightedDataset, z: float
) -> TrimPartition:
    """The trimmed set and its complement behind trimmed_objective."""
    costs = dataset_costs(model, theta, data)
    z = _check_z(z, data.total_weight)
    kept = _kept_weights(costs, data.w, data.ids, z)
    return TrimPartition(inlier_weights=kept, outlier_weights=data.w - kept)
