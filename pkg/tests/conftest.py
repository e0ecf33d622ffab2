"""Shared instance builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from trimcore import (
    LossModel,
    ParamBall,
    WeightedDataset,
    continuity_for,
    inject_outliers,
    pilot_theta,
    synth_generate,
)


def make_dataset(X, ids=None, w=None, y=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if ids is None:
        ids = np.arange(len(X))
    return WeightedDataset(ids=np.asarray(ids), X=X, w=w, y=y)


def lipschitz_ball(model, data, center, radius, ball_radius=None):
    cont = continuity_for(
        model, data, np.asarray(center, dtype=np.float64),
        kind="lipschitz",
        ball_radius=radius if ball_radius is None else ball_radius,
    )
    return ParamBall(np.asarray(center, dtype=np.float64), radius, cont)


def pilot_ball_for(model, data, radius, frac=0.2, seed=0):
    """Ball centered at a pilot fit with a lipschitz certificate."""
    theta = pilot_theta(model, data, frac=frac, seed=seed)
    return lipschitz_ball(model, data, theta, radius)


@pytest.fixture
def kmedian1():
    """Tiny 1-center k-median with unit weights."""
    data = make_dataset([[0.0], [1.0], [2.0], [9.0]])
    model = LossModel("kmedian", dim=1, k=1)
    return model, data


@pytest.fixture
def mixture_instance():
    """3-cluster planted mixture with injected clustering outliers."""
    def build(n=400, dim=2, k=3, outliers=20, seed=0):
        data, params = synth_generate(
            "mixture", n=n, dim=dim, seed=seed, k=k,
            separation=12.0, cluster_std=1.0,
        )
        if outliers:
            data = inject_outliers(data, outliers, "clustering", seed=seed + 1)
        return data, params
    return build


@pytest.fixture
def logistic_instance():
    def build(n=300, dim=2, seed=0, noise=0.0):
        data, params = synth_generate(
            "logistic", n=n, dim=dim, seed=seed, noise=noise
        )
        return data, params
    return build
