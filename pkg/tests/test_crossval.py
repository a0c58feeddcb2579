"""Fold construction and the cross-validated stopping rule."""

import numpy as np
import pytest

from spboost.boosting import BoostConfig, boost
from spboost.crossval import (
    FoldKind,
    FoldPlan,
    boost_cv_curve,
    choose_stopping_iteration,
    make_spatial_folds,
    make_time_folds,
)
from spboost.errors import ValidationError
from spboost.panel import ModelSpec, augment_design
from spboost.pipeline import build_fold_plan, select_m_opt
from spboost.transform import TransformedData
from spboost.panel import Effects

from conftest import make_panel, make_weights


def make_td(y, z):
    return TransformedData(
        response=np.asarray(y, dtype=float),
        design=np.asarray(z, dtype=float),
        names=tuple("c%d" % j for j in range(np.asarray(z).shape[1])),
        effects=Effects.RANDOM,
        fingerprint="test",
    )


# ---------------------------------------------------------------------------
# FoldPlan validation


def test_fold_plan_requires_location_purity():
    # Location 0 changes fold between periods: invalid for spatial folds.
    assignment = np.array([0, 1, 1, 1], dtype=np.int64)
    with pytest.raises(ValidationError):
        FoldPlan(FoldKind.SPATIAL, 2, assignment, n_locations=2, n_periods=2)


def test_fold_plan_requires_period_purity_for_time_folds():
    assignment = np.array([0, 1, 1, 0], dtype=np.int64)
    with pytest.raises(ValidationError):
        FoldPlan(FoldKind.TIME, 2, assignment, n_locations=2, n_periods=2)


def test_fold_plan_rejects_empty_fold():
    assignment = np.zeros(4, dtype=np.int64)
    with pytest.raises(ValidationError):
        FoldPlan(FoldKind.SPATIAL, 2, assignment, n_locations=2, n_periods=2)


def test_fold_plan_rejects_wrong_shape():
    with pytest.raises(ValidationError):
        FoldPlan(FoldKind.SPATIAL, 2, np.zeros(5, dtype=np.int64), 2, 2)


# ---------------------------------------------------------------------------
# Spatial folds


def test_separated_clouds_split_into_their_own_folds():
    rng = np.random.default_rng(0)
    cloud_a = rng.normal(0.0, 0.1, size=(6, 2))
    cloud_b = rng.normal(10.0, 0.1, size=(6, 2))
    pts = np.vstack([cloud_a, cloud_b])
    plan = make_spatial_folds(pts, n_folds=2, n_periods=3, seed=1)
    labels = plan.assignment[:12]
    assert len(set(labels[:6])) == 1
    assert len(set(labels[6:])) == 1
    assert labels[0] != labels[6]


def test_one_fold_per_location_when_k_equals_n():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0.0, 1.0, size=(7, 2))
    plan = make_spatial_folds(pts, n_folds=7, n_periods=2, seed=3)
    counts = np.bincount(plan.assignment[:7], minlength=7)
    assert np.all(counts == 1)


def test_folds_cover_every_period_of_each_location():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0.0, 1.0, size=(100, 2))
    t = 5
    plan = make_spatial_folds(pts, n_folds=5, n_periods=t, seed=7)
    cube = plan.assignment.reshape(t, 100)
    assert np.all(cube == cube[0])
    assert plan.n_folds == 5
    assert np.all(np.bincount(plan.assignment, minlength=5) > 0)


def test_spatial_folds_are_deterministic():
    rng = np.random.default_rng(5)
    pts = rng.uniform(0.0, 1.0, size=(30, 2))
    a = make_spatial_folds(pts, 4, 3, seed=11)
    b = make_spatial_folds(pts, 4, 3, seed=11)
    assert np.array_equal(a.assignment, b.assignment)
    c = make_spatial_folds(pts, 4, 3, seed=12)
    assert c.assignment.shape == a.assignment.shape


def test_spatial_folds_validate_inputs():
    pts = np.random.default_rng(6).uniform(size=(5, 2))
    with pytest.raises(ValidationError):
        make_spatial_folds(pts, 6, 2, seed=0)
    with pytest.raises(ValidationError):
        make_spatial_folds(pts, 1, 2, seed=0)
    bad = pts.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValidationError):
        make_spatial_folds(bad, 2, 2, seed=0)
    with pytest.raises(ValidationError):
        make_spatial_folds(pts.ravel(), 2, 2, seed=0)


# ---------------------------------------------------------------------------
# Time folds


def test_time_folds_hold_out_one_period_each():
    plan = make_time_folds(4, 3)
    assert plan.n_folds == 3
    cube = plan.assignment.reshape(3, 4)
    for ti in range(3):
        assert np.all(cube[ti] == ti)


def test_time_folds_need_two_periods():
    with pytest.raises(ValidationError):
        make_time_folds(4, 1)


def test_build_fold_plan_requires_centroids_for_spatial():
    data = make_panel(6, 2, 1, with_centroids=False)
    with pytest.raises(ValidationError):
        build_fold_plan(data, FoldKind.SPATIAL, 2, seed=0)
    plan = build_fold_plan(data, FoldKind.TIME, 2, seed=0)
    assert plan.kind is FoldKind.TIME


# ---------------------------------------------------------------------------
# Risk curve


def two_fold_plan(n, t):
    labels = np.zeros(n, dtype=np.int64)
    labels[n // 2 :] = 1
    return FoldPlan(FoldKind.SPATIAL, 2, np.tile(labels, t), n, t)


def test_cv_risk_at_zero_iterations_is_heldout_mean_square(rng):
    n, t, k = 10, 2, 4
    y = rng.normal(size=n * t)
    z = rng.normal(size=(n * t, k))
    plan = two_fold_plan(n, t)
    curve = boost_cv_curve(y, z, plan, BoostConfig(m_stop=5))
    expected = 0.0
    for f in range(2):
        test = plan.assignment == f
        expected += np.mean(y[test] ** 2)
    expected /= 2
    assert abs(curve[0] - expected) <= 1e-10


def test_cv_curve_matches_brute_force_two_fold(rng):
    n, t, k, m, s = 12, 2, 4, 15, 0.1
    y = rng.normal(size=n * t)
    z = rng.normal(size=(n * t, k))
    plan = two_fold_plan(n, t)
    curve = boost_cv_curve(y, z, plan, BoostConfig(learning_rate=s, m_stop=m))

    fold_curves = []
    for f in range(2):
        train = plan.assignment != f
        test = ~train
        fit = boost(make_td(y[train], z[train]), BoostConfig(learning_rate=s, m_stop=m))
        eta = np.zeros(test.sum())
        risks = [np.mean(y[test] ** 2)]
        for j, step in zip(fit.selection_path, fit.increments):
            eta = eta + step * z[test, j]
            risks.append(np.mean((y[test] - eta) ** 2))
        fold_curves.append(risks)
    expected = np.mean(fold_curves, axis=0)
    assert np.allclose(curve, expected, atol=1e-12)


def test_cv_curve_noiseless_single_column_reaches_zero():
    rng = np.random.default_rng(8)
    n, t = 14, 2
    z = rng.normal(size=(n * t, 3))
    y = 2.0 * z[:, 0]
    plan = two_fold_plan(n, t)
    curve = boost_cv_curve(y, z, plan, BoostConfig(m_stop=300))
    assert np.all(np.diff(curve) <= 1e-12)
    assert curve[-1] <= 1e-6 * curve[0]
    assert choose_stopping_iteration(curve) == len(curve) - 1


def test_cv_curve_is_thread_count_invariant(rng):
    n, t, k = 10, 3, 5
    y = rng.normal(size=n * t)
    z = rng.normal(size=(n * t, k))
    plan = two_fold_plan(n, t)
    cfg = BoostConfig(m_stop=20)
    serial = boost_cv_curve(y, z, plan, cfg, threads=1)
    parallel = boost_cv_curve(y, z, plan, cfg, threads=2)
    assert np.array_equal(serial, parallel)


def test_cv_curve_rejects_mismatched_rows(rng):
    plan = two_fold_plan(10, 2)
    with pytest.raises(ValidationError):
        boost_cv_curve(rng.normal(size=19), rng.normal(size=(19, 2)), plan, BoostConfig())


def test_choose_stopping_iteration_prefers_smaller_m():
    assert choose_stopping_iteration(np.array([3.0, 1.0, 2.0])) == 1
    assert choose_stopping_iteration(np.array([2.0, 1.0, 1.0])) == 1
    assert choose_stopping_iteration(np.array([5.0])) == 0
    with pytest.raises(ValidationError):
        choose_stopping_iteration(np.array([]))


# ---------------------------------------------------------------------------
# Stopping-rule integration


def test_select_m_opt_is_deterministic():
    data = make_panel(20, 3, 2, seed=15, noise=0.5)
    w, _ = make_weights(20, seed=15, k=3)
    design = augment_design(data, w, ModelSpec())
    plan = build_fold_plan(data, FoldKind.SPATIAL, 2, seed=21)
    cfg = BoostConfig(m_stop=40)
    m1, curve1 = select_m_opt(data, design, w, ModelSpec(), cfg, plan)
    m2, curve2 = select_m_opt(data, design, w, ModelSpec(), cfg, plan)
    assert m1 == m2
    assert np.array_equal(curve1, curve2)
    assert curve1.shape == (41,)
    assert curve1[m1] == curve1.min()
