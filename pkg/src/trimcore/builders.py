"""Coreset builders: uniform, importance (sensitivity), and layered (GSP).

All builders return a Coreset: a weighted point set plus provenance (builder
name, parameters, seed, source size).  Weights are chosen so the total weight
of the coreset equals the total weight of its source:

- uniform: m points without replacement, each weighing n/m (equal-weight
  inputs only; ``mass_uniform_sample`` is the weighted extension drawing with
  replacement proportionally to weight, each draw weighing W/m).
- importance: m i.i.d. draws with probability s_i/S, each draw weighing
  w_i * S / (s_i * m); unbiased for every f(theta, .).
- gsp: points are split into cost layers around the anchor theta~ (layer 0
  below the mean cost T, then dyadic rings), and each layer is sampled
  uniformly with per-layer weight |X_j| / |C_j|, so each layer's mass is
  conserved exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data import ParamBall, WeightedDataset
from .errors import ConfigError
from .losses import LossModel, dataset_costs
from .sensitivity import (
    SensitivityProfile,
    sensitivity_lipschitz,
    sensitivity_qfp,
    theoretical_sample_size,
)

__all__ = [
    "Coreset",
    "GspLayering",
    "uniform_sample",
    "mass_uniform_sample",
    "delta_sample_size",
    "importance_sample",
    "gsp_layering",
    "gsp_build",
    "BuilderSpec",
]


@dataclass(frozen=True)
class Coreset:
    """A weighted summary of a source dataset, with provenance."""

    data: WeightedDataset
    builder: str
    params: dict
    seed: int | None
    source_size: int

    def __len__(self) -> int:
        return len(self.data)

    @property
    def total_weight(self) -> float:
        return self.data.total_weight

    def provenance(self) -> dict:
        return {
            "builder": self.builder,
            "params": dict(self.params),
            "seed": self.seed,
            "source_size": self.source_size,
        }


def _rng(seed: int | None, *tags: int) -> np.random.Generator:
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng([int(seed), *map(int, tags)])


def _equal_weights(data: WeightedDataset) -> bool:
    return bool(np.all(data.w == data.w[0]))


def uniform_sample(data: WeightedDataset, m: int, seed: int | None) -> Coreset:
    """m points uniformly without replacement, each weighing w0 * n / m.

    Defined on equal-weight inputs (weight structure cannot survive a uniform
    draw otherwise); pass unequal-weight sets to mass_uniform_sample instead.
    """
    n = len(data)
    if not 1 <= m <= n:
        raise ConfigError(f"uniform sample size {m} outside [1, {n}]")
    if not _equal_weights(data):
        raise ConfigError("uniform_sample needs equal weights; use mass_uniform_sample")
    rows = _rng(seed).choice(n, size=m, replace=False)
    sub = data.subset(rows)
    scaled = sub.replace_weights(sub.w * (n / m))
    return Coreset(scaled, "uniform", {"m": m}, seed, n)


def mass_uniform_sample(data: WeightedDataset, m: int, seed: int | None) -> Coreset:
    """Weighted uniform: m draws with replacement, p_i proportional to w_i,
    each draw weighing W / m.  Total weight is conserved exactly."""
    n = len(data)
    if m < 1:
        raise ConfigError(f"sample size {m} must be >= 1")
    W = data.total_weight
    p = data.w / W
    rows = _rng(seed).choice(n, size=m, replace=True, p=p)
    sub = data.subset(rows)
    scaled = sub.replace_weights(np.full(m, W / m))
    return Coreset(scaled, "uniform", {"m": m, "weighted": True}, seed, n)


def delta_sample_size(delta: float, vcdim: int, eta: float, c: float = 1.0) -> int:
    """ceil(c / delta^2 * (vcdim + ln(1/eta))), floored at 1."""
    if not (0 < delta <= 1) or not (0 < eta < 1) or vcdim < 1 or c <= 0:
        raise ConfigError(
            f"invalid delta-sample parameters delta={delta}, vcdim={vcdim}, eta={eta}, c={c}"
        )
    return max(1, math.ceil(c / (delta * delta) * (vcdim + math.log(1.0 / eta))))


def importance_sample(
    data: WeightedDataset, profile: SensitivityProfile, m: int, seed: int | None
) -> Coreset:
    """m i.i.d. draws with probability s_i / S and weight w_i * S / (s_i m)."""
    n = len(data)
    if m < 1:
        raise ConfigError(f"sample size {m} must be >= 1")
    if profile.s.shape[0] != n or not np.array_equal(profile.ids, data.ids):
        raise ConfigError("sensitivity profile does not align with the dataset")
    p = profile.probabilities
    rows = _rng(seed).choice(n, size=m, replace=True, p=p)
    sub = data.subset(rows)
    weights = data.w[rows] * (profile.S / (profile.s[rows] * m))
    return Coreset(
        sub.replace_weights(weights),
        "importance",
        {"m": m, "S": profile.S, "method": profile.method},
        seed,
        n,
    )


@dataclass(frozen=True)
class GspLayering:
    """Cost layers around the anchor: rho = min cost, T = mean cost.

    layer_of[i] = 0 where cost - rho < T, else floor(log2((cost - rho)/T)).
    The dyadic rings make each layer's costs agree within a factor two, which
    is what lets uniform per-layer sampling carry a relative-error guarantee.
    """

    rho: float
    T: float
    layer_of: np.ndarray
    costs: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        """Number of layers (largest occupied index + 1)."""
        return int(self.layer_of.max()) + 1

    def members(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.layer_of == j)

    def occupied(self) -> list[int]:
        return sorted(int(v) for v in np.unique(self.layer_of))


def gsp_layering(model: LossModel, data: WeightedDataset, ball: ParamBall) -> GspLayering:
    """Assign every point to its cost layer at the ball center."""
    costs = dataset_costs(model, ball.center, data)
    rho = float(costs.min())
    T = float(np.dot(data.w, costs) / data.total_weight)
    r = costs - rho
    layer = np.zeros(len(data), dtype=np.int64)
    if T > 0:
        above = r >= T
        with np.errstate(divide="ignore"):
            layer[above] = np.floor(np.log2(r[above] / T)).astype(np.int64)
        layer[layer < 0] = 0
    return GspLayering(rho=rho, T=T, layer_of=layer, costs=costs)


def gsp_build(
    model: LossModel,
    data: WeightedDataset,
    ball: ParamBall,
    per_layer: int | Mapping[int, int],
    seed: int | None,
) -> Coreset:
    """Layered uniform sampling: per layer j, min(m_j, |X_j|) points without
    replacement with weight |X_j| / |C_j| (times the base weight).

    Weighted inputs fall back to per-layer mass sampling (with replacement,
    weight W_j / m_j); either way each layer's total weight is conserved.
    """
    layering = gsp_layering(model, data, ball)
    equal = _equal_weights(data)
    rows_out: list[np.ndarray] = []
    weights_out: list[np.ndarray] = []
    for j in layering.occupied():
        members = layering.members(j)
        if isinstance(per_layer, Mapping):
            m_j = int(per_layer.get(j, 1))
        else:
            m_j = int(per_layer)
        if m_j < 1:
            raise ConfigError(f"per-layer size for layer {j} must be >= 1")
        rng = _rng(seed, j)
        if equal:
            take = min(m_j, members.shape[0])
            chosen = members[rng.choice(members.shape[0], size=take, replace=False)]
            w_layer = data.w[chosen] * (members.shape[0] / take)
        else:
            mass = float(data.w[members].sum())
            chosen = members[
                rng.choice(members.shape[0], size=m_j, replace=True, p=data.w[members] / mass)
            ]
            w_layer = np.full(m_j, mass / m_j)
        rows_out.append(chosen)
        weights_out.append(w_layer)
    rows = np.concatenate(rows_out)
    sub = data.subset(rows)
    out = sub.replace_weights(np.concatenate(weights_out))
    params = {
        "per_layer": dict(per_layer) if isinstance(per_layer, Mapping) else int(per_layer),
        "L": layering.L,
        "rho": layering.rho,
        "T": layering.T,
    }
    return Coreset(out, "gsp", params, seed, len(data))


@dataclass(frozen=True)
class BuilderSpec:
    """A named, size-configured builder usable as a black box.

    ``build(model, data, ball, eps, seed)`` is pure given the seed.  When no
    explicit size is configured, sizes fall back to the theory formulas with
    the multiplier c (guidance, capped at the input size where sampling is
    without replacement).
    """

    name: str
    size: int | None = None
    per_layer: int | None = None
    c: float = 1.0
    eta: float = 0.1
    sensitivity: str = "lipschitz"

    def __post_init__(self) -> None:
        if self.name not in ("uniform", "importance", "gsp"):
            raise ConfigError(f"unknown builder {self.name!r}")
        if self.sensitivity not in ("lipschitz", "qfp"):
            raise ConfigError(f"unknown sensitivity method {self.sensitivity!r}")

    def build(
        self,
        model: LossModel,
        data: WeightedDataset,
        ball: ParamBall,
        eps: float,
        seed: int | None,
    ) -> Coreset:
        n = len(data)
        if self.name == "uniform":
            m = self.size or delta_sample_size(eps, model.vc_dimension, self.eta, self.c)
            if _equal_weights(data):
                return uniform_sample(data, min(m, n), seed)
            return mass_uniform_sample(data, m, seed)
        if self.name == "importance":
            if self.sensitivity == "qfp":
                profile = sensitivity_qfp(model, data, ball)
            else:
                profile = sensitivity_lipschitz(model, data, ball)
            m = self.size or theoretical_sample_size(
                profile.S, eps, self.eta, vcdim=model.vc_dimension, c=self.c
            )
            return importance_sample(data, profile, m, seed)
        if self.per_layer is not None:
            per_layer = self.per_layer
        else:
            total = self.size or delta_sample_size(eps, model.vc_dimension, self.eta, self.c)
            layering = gsp_layering(model, data, ball)
            per_layer = max(1, math.ceil(total / max(1, len(layering.occupied()))))
        return gsp_build(model, data, ball, per_layer, seed)
