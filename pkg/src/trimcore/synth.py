"""Synthetic dataset generators and outlier injection."""

from __future__ import annotations

import warnings

import numpy as np

from .data import WeightedDataset
from .errors import ConfigError

__all__ = ["synth_generate", "inject_outliers"]


def _rng(seed: int | None, *tags: int) -> np.random.Generator:
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng([seed, *tags])


def synth_generate(
    kind: str,
    n: int,
    dim: int,
    seed: int | None = 0,
    k: int = 3,
    separation: float = 10.0,
    cluster_std: float = 1.0,
    noise: float = 0.0,
) -> tuple[WeightedDataset, dict]:
    """Deterministic synthetic dataset plus a manifest of generator params.

    kind="mixture": k Gaussian clusters whose centers are rescaled so the
    closest pair sits exactly `separation` apart.
    kind="logistic": a planted unit-normal hyperplane; labels are the sign of
    the margin plus optional Gaussian margin noise (noise=0 gives a
    perfectly separable labeling).
    """
    if n < 1:
        raise ConfigError(f"n={n} must be >= 1")
    if dim < 1:
        raise ConfigError(f"dim={dim} must be >= 1")
    params: dict = {"kind": kind, "n": n, "dim": dim, "seed": seed}
    if kind == "mixture":
        if k < 1:
            raise ConfigError(f"k={k} must be >= 1")
        rng = _rng(seed, 17)
        centers = rng.normal(0.0, 1.0, (k, dim))
        if k > 1:
            gaps = [
                float(np.linalg.norm(centers[i] - centers[j]))
                for i in range(k)
                for j in range(i + 1, k)
            ]
            closest = min(gaps)
            while closest == 0.0:
                centers = rng.normal(0.0, 1.0, (k, dim))
                gaps = [
                    float(np.linalg.norm(centers[i] - centers[j]))
                    for i in range(k)
                    for j in range(i + 1, k)
                ]
                closest = min(gaps)
            centers *= separation / closest
        sizes = np.full(k, n // k)
        sizes[: n % k] += 1
        blocks = [
            centers[j] + cluster_std * rng.normal(0.0, 1.0, (int(sizes[j]), dim))
            for j in range(k)
            if sizes[j] > 0
        ]
        X = np.concatenate(blocks, axis=0)
        params.update(
            {
                "k": k,
                "separation": separation,
                "cluster_std": cluster_std,
                "centers": centers.tolist(),
            }
        )
        return WeightedDataset(np.arange(n), X, np.ones(n)), params
    if kind == "logistic":
        rng = _rng(seed, 23)
        theta = rng.normal(0.0, 1.0, dim)
        theta /= np.linalg.norm(theta)
        X = rng.normal(0.0, 1.0, (n, dim))
        margins = X @ theta
        if noise > 0:
            margins = margins + noise * rng.normal(0.0, 1.0, n)
        y = np.where(margins >= 0, 1.0, -1.0)
        params.update({"noise": noise, "theta_planted": theta.tolist()})
        return WeightedDataset(np.arange(n), X, np.ones(n), y), params
    raise ConfigError(f"unknown synthetic kind {kind!r}")


def inject_outliers(
    data: WeightedDataset,
    count: int,
    mode: str,
    seed: int | None = 0,
    sigma: float = 200.0,
) -> WeightedDataset:
    """Perturb `count` points into outliers.

    mode="clustering": add per-dimension N(0, sigma) noise to the selected
    rows.  mode="supervised": same feature noise, plus each selected label
    flips with probability 1/2.
    """
    if count < 0 or count >= len(data):
        raise ConfigError(f"outlier count {count} outside [0, n)")
    if mode not in ("clustering", "supervised"):
        raise ConfigError(f"unknown outlier mode {mode!r}")
    if mode == "supervised" and data.y is None:
        raise ConfigError("supervised outlier mode needs labels")
    out = data.copy()
    if count == 0:
        return out
    if sigma == 0.0:
        warnings.warn("sigma=0: injected outliers coincide with the originals", stacklevel=2)
    rng = _rng(seed, 19)
    rows = rng.choice(len(data), size=count, replace=False)
    out.X[rows] += rng.normal(0.0, sigma, (count, data.dim))
    if mode == "supervised":
        flips = rng.random(count) < 0.5
        out.y[rows[flips]] *= -1.0
    return out
