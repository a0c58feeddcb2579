"""Shared fixtures and dense-matrix oracles for the test suite.

The oracles build the structured operators (time projectors, spatial lag,
concentration matrices) as explicit dense NT x NT matrices via np.kron so
the blockwise production code can be checked against an independent
construction.  Keep these small: they are O((NT)^3).
"""

import numpy as np
import pytest

from spboost.panel import PanelDataset
from spboost.weights import SpatialWeights, build_knn_weights

ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = "ACCEPTANCE %d: %s - %s" % (number, "PASS" if passed else "FAIL", detail)
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dense_within(n, t):
    """Q: per-location demeaning over time, (I_T - J_T/T) kron I_N."""
    jbar = np.full((t, t), 1.0 / t)
    return np.kron(np.eye(t) - jbar, np.eye(n))


def dense_between(n, t):
    """Per-location time averaging, (J_T/T) kron I_N."""
    jbar = np.full((t, t), 1.0 / t)
    return np.kron(jbar, np.eye(n))


def dense_between_contrast(n, t):
    """Mean minus deviations/(T-1): (J_T/T - (I_T - J_T/T)/(T-1)) kron I_N."""
    return dense_between(n, t) - dense_within(n, t) / (t - 1)


def dense_lag(weights, t):
    """I_T kron W."""
    return np.kron(np.eye(t), weights.matrix)


def dense_filter(weights, rho):
    return np.eye(weights.n_locations) - rho * weights.matrix


def dense_omega(weights, t, rho1, rho2, sigma_mu2, sigma_eps2):
    """Covariance of the stacked disturbances, built blockwise from kron."""
    n = weights.n_locations
    a = dense_filter(weights, rho1)
    b = dense_filter(weights, rho2)
    ainv2 = np.linalg.inv(a.T @ a)
    binv2 = np.linalg.inv(b.T @ b)
    jbar = np.full((t, t), 1.0 / t)
    e = np.eye(t) - jbar
    between_block = t * sigma_mu2 * ainv2 + sigma_eps2 * binv2
    return np.kron(jbar, between_block) + np.kron(e, sigma_eps2 * binv2)


def dense_omega_inv(weights, t, rho1, rho2, sigma_mu2, sigma_eps2):
    n = weights.n_locations
    a = dense_filter(weights, rho1)
    b = dense_filter(weights, rho2)
    ainv2 = np.linalg.inv(a.T @ a)
    binv2 = np.linalg.inv(b.T @ b)
    jbar = np.full((t, t), 1.0 / t)
    e = np.eye(t) - jbar
    m1 = np.linalg.inv(t * sigma_mu2 * ainv2 + sigma_eps2 * binv2)
    m2 = (b.T @ b) / sigma_eps2
    return np.kron(jbar, m1) + np.kron(e, m2)


def dense_fixed_transform(weights, t, rho2):
    """(E_T kron B)."""
    n = weights.n_locations
    jbar = np.full((t, t), 1.0 / t)
    return np.kron(np.eye(t) - jbar, dense_filter(weights, rho2))


def dense_symmetric_sqrt(matrix):
    vals, vecs = np.linalg.eigh(matrix)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def make_weights(n, seed=0, k=None):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(n, 2))
    return build_knn_weights(pts, k if k is not None else min(3, n - 1)), pts


def make_panel(n, t, p, seed=0, with_centroids=True, noise=1.0):
    """Small synthetic panel with iid regressors and noise."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, size=(n * t, p))
    beta = rng.normal(0.0, 1.0, size=p)
    y = x @ beta + noise * rng.normal(0.0, 1.0, size=n * t)
    centroids = rng.uniform(0.0, 1.0, size=(n, 2)) if with_centroids else None
    return PanelDataset(
        response=y,
        regressors=x,
        regressor_names=tuple("x%d" % (j + 1) for j in range(p)),
        location_ids=tuple("L%d" % i for i in range(n)),
        period_ids=tuple(str(2000 + s) for s in range(t)),
        centroids=centroids,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
