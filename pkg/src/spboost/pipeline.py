"""End-to-end estimation pipeline.

One pass through the estimator: build the candidate design, estimate the
error-process parameters from preliminary residuals, whiten the data once,
pick the boosting stopping iteration by cross-validation on that whitened
data, run the final boost, and optionally deselect and/or compute the
least-squares benchmark.  The variance parameters are estimated once on the
full sample and shared by every fold, which keeps the folds comparable and
the whole procedure deterministic given a seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .boosting import BoostConfig, BoostFit, DeselectionResult, boost, deselect, fgls_baseline
from .crossval import (
    FoldKind,
    FoldPlan,
    boost_cv_curve,
    choose_stopping_iteration,
    make_spatial_folds,
    make_time_folds,
)
from .errors import RankError, ValidationError
from .gmm import VarianceComponents, estimate_variance_components
from .linalg import fixed_effects_whitener, random_effects_whitener
from .panel import AugmentedDesign, Effects, ModelSpec, PanelDataset, augment_design
from .transform import TransformedData, transform_fixed, transform_random
from .weights import SpatialWeights


def standardize_regressors(data: PanelDataset) -> PanelDataset:
    """Center and scale each raw regressor column to unit variance.

    Columns with zero variance are left untouched (with a warning) so a
    constant column is not silently destroyed.
    """
    x = data.regressors
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    flat = sd == 0.0
    if flat.any():
        bad = [data.regressor_names[i] for i in np.nonzero(flat)[0][:5]]
        warnings.warn(f"constant column(s) left unstandardized: {bad}")
    scaled = np.where(flat, x, (x - mean) / np.where(flat, 1.0, sd))
    return PanelDataset(
        response=data.response,
        regressors=scaled,
        regressor_names=data.regressor_names,
        location_ids=data.location_ids,
        period_ids=data.period_ids,
        centroids=data.centroids,
    )


def build_fold_plan(
    data: PanelDataset, kind: FoldKind, n_folds: int, seed: int
) -> FoldPlan:
    if kind is FoldKind.TIME:
        return make_time_folds(data.n_locations, data.n_periods)
    if data.centroids is None:
        raise ValidationError(
            "spatial cross-validation needs location centroids; supply them or "
            "switch to leave-time-out folds"
        )
    return make_spatial_folds(data.centroids, n_folds, data.n_periods, seed)


def whiten(
    data: PanelDataset,
    design: AugmentedDesign,
    weights: SpatialWeights,
    spec: ModelSpec,
    components: VarianceComponents,
) -> TransformedData:
    """Apply the transform matching the effects mode."""
    if spec.effects is Effects.FIXED:
        op = fixed_effects_whitener(components, weights, data.n_periods)
        return transform_fixed(data, design, op)
    op = random_effects_whitener(components, weights, data.n_periods)
    return transform_random(data, design, op)


def select_m_opt(
    data: PanelDataset,
    design: AugmentedDesign,
    weights: SpatialWeights,
    spec: ModelSpec,
    config: BoostConfig,
    plan: FoldPlan,
    threads: int = 1,
) -> tuple[int, np.ndarray]:
    """Cross-validated stopping iteration for boosting.

    Estimates the variance parameters once on the full sample, whitens
    once, then evaluates held-out risk per fold along the boosting path.
    Returns the minimizing iteration (ties to the smaller count) and the
    fold-averaged risk curve indexed 0..m_stop.
    """
    components = estimate_variance_components(
        data, design, weights, spec, config=config, cv_plan=plan
    )
    td = whiten(data, design, weights, spec, components)
    curve = boost_cv_curve(td.response, td.design, plan, config, threads=threads)
    return choose_stopping_iteration(curve), curve


@dataclass(frozen=True)
class FitResult:
    """Everything a fit produces, ready for reporting."""

    spec: ModelSpec
    components: VarianceComponents
    transformed: TransformedData
    fold_plan: FoldPlan
    cv_curve: np.ndarray
    m_opt: int
    fit: BoostFit
    deselection: DeselectionResult | None
    baseline: np.ndarray | None
    baseline_unavailable_reason: str | None
    names: tuple[str, ...]

    def coefficients(self, method: str) -> np.ndarray:
        """Coefficient vector for 'ltb', 'des', or 'fgls'."""
        if method == "ltb":
            return self.fit.coefficients
        if method == "des":
            if self.deselection is None:
                raise ValidationError("deselection was not run")
            if self.deselection.refit is None:
                return np.zeros(len(self.names))
            return self.deselection.refit.coefficients
        if method == "fgls":
            if self.baseline is None:
                raise RankError(
                    self.baseline_unavailable_reason or "baseline unavailable"
                )
            return self.baseline
        raise ValidationError(f"unknown method {method!r}")


def fit_model(
    data: PanelDataset,
    weights: SpatialWeights,
    spec: ModelSpec,
    config: BoostConfig = BoostConfig(),
    cv_kind: FoldKind = FoldKind.SPATIAL,
    n_folds: int = 5,
    seed: int = 0,
    deselect_threshold: float | None = 0.01,
    baseline: bool = False,
    threads: int = 1,
    standardize: bool = False,
) -> FitResult:
    """Full estimation pass over one panel.

    ``deselect_threshold=None`` skips deselection.  ``baseline=True`` adds
    the least-squares benchmark when the design permits it; an
    under-determined design marks it unavailable instead of failing the run.
    """
    if standardize:
        data = standardize_regressors(data)
    design = augment_design(data, weights, spec)
    plan = build_fold_plan(data, cv_kind, n_folds, seed)
    components = estimate_variance_components(
        data, design, weights, spec, config=config, cv_plan=plan
    )
    td = whiten(data, design, weights, spec, components)
    curve = boost_cv_curve(td.response, td.design, plan, config, threads=threads)
    m_opt = choose_stopping_iteration(curve)
    fit = boost(td, config, n_iterations=m_opt)
    des = None
    if deselect_threshold is not None:
        des = deselect(td, config, fit, threshold=deselect_threshold)
    fgls = None
    unavailable = None
    if baseline:
        try:
            fgls = fgls_baseline(td)
        except RankError as exc:
            unavailable = str(exc)
    return FitResult(
        spec=spec,
        components=components,
        transformed=td,
        fold_plan=plan,
        cv_curve=curve,
        m_opt=m_opt,
        fit=fit,
        deselection=des,
        baseline=fgls,
        baseline_unavailable_reason=unavailable,
        names=design.names,
    )
