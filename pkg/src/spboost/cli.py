"""Command line interface.

Four subcommands: ``fit`` estimates a model on a panel CSV, ``cv`` reports
the cross-validated risk curve and stopping iteration, ``transform`` writes
the whitened data, and ``simulate`` runs the Monte Carlo harness.  Exit
codes: 0 success, 2 invalid inputs or options, 3 numerical estimation
failure, 4 file I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

import numpy as np

from . import __version__
from .boosting import BoostConfig
from .crossval import FoldKind
from .errors import EstimationError, ValidationError
from .gmm import estimate_variance_components
from .panel import ModelSpec, augment_design, read_panel_csv
from .pipeline import build_fold_plan, fit_model, select_m_opt, standardize_regressors, whiten
from .report import (
    components_payload,
    file_sha256,
    fit_payload,
    metrics_payload,
    tool_stamp,
    write_csv,
    write_fit_reports,
    write_json,
    write_metrics_reports,
)
from .simulate import METHODS, DgpConfig, run_experiment
from .weights import build_knn_weights, read_centroid_csv, read_neighbor_csv, row_normalize

THREADS_ENV = "SPBOOST_THREADS"


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _add_ingestion_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--panel", required=True, help="long-format panel CSV (location,period,y,...)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--weights", help="neighbour-list weight CSV (from,to,weight)")
    src.add_argument("--centroids", help="centroid CSV (location,cx,cy); pair with --knn")
    p.add_argument("--knn", type=int, help="number of nearest neighbours for --centroids")
    p.add_argument(
        "--row-normalize",
        action="store_true",
        help="row-normalize a neighbour-list weight matrix after loading",
    )


def _add_model_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=["ans", "kkp", "gspecm"], default="gspecm")
    p.add_argument("--effects", choices=["random", "fixed"], default="random")
    p.add_argument("--no-intercept", action="store_true", help="drop the intercept column")
    p.add_argument("--no-spatial-lags", action="store_true", help="drop the spatial lag block")
    p.add_argument(
        "--standardize",
        action="store_true",
        help="center and scale raw regressors before building the design",
    )


def _add_boost_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--mstop-budget", type=int, default=1000, help="boosting iteration budget")


def _add_cv_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cv", choices=["spatial", "time"], default="spatial")
    p.add_argument("--folds", type=int, default=5, help="spatial fold count (time CV uses one per period)")
    p.add_argument("--seed", type=int, default=0)


def _add_common_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", required=True, help="directory for the JSON/CSV reports")
    p.add_argument("--threads", type=int, default=_default_threads(), help=f"parallelism cap (default ${THREADS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spboost",
        description="Boosted estimation for spatial panels with error components",
    )
    parser.add_argument("--version", action="version", version=f"spboost {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="estimate a model on a panel")
    _add_ingestion_options(p_fit)
    _add_model_options(p_fit)
    _add_boost_options(p_fit)
    _add_cv_options(p_fit)
    p_fit.add_argument("--tau", type=float, default=0.01, help="deselection threshold")
    p_fit.add_argument("--no-deselect", action="store_true", help="skip deselection")
    p_fit.add_argument("--baseline", action="store_true", help="add the least-squares benchmark")
    _add_common_output(p_fit)

    p_cv = sub.add_parser("cv", help="cross-validated risk curve and stopping iteration")
    _add_ingestion_options(p_cv)
    _add_model_options(p_cv)
    _add_boost_options(p_cv)
    _add_cv_options(p_cv)
    _add_common_output(p_cv)

    p_tr = sub.add_parser("transform", help="write the whitened response and design")
    _add_ingestion_options(p_tr)
    _add_model_options(p_tr)
    _add_boost_options(p_tr)
    _add_cv_options(p_tr)
    _add_common_output(p_tr)

    p_sim = sub.add_parser("simulate", help="Monte Carlo estimator comparison")
    p_sim.add_argument("--n", type=int, default=100, help="locations")
    p_sim.add_argument("--t", type=int, default=5, help="periods")
    p_sim.add_argument("--k", type=int, default=40, help="candidate columns (regressors plus lags)")
    p_sim.add_argument("--rho1", type=float, default=0.0)
    p_sim.add_argument("--rho2", type=float, default=0.0)
    p_sim.add_argument("--sigma-mu2", type=float, default=10.0)
    p_sim.add_argument("--sigma-eps2", type=float, default=10.0)
    p_sim.add_argument("--nsim", type=int, default=20)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--knn", type=int, default=10)
    p_sim.add_argument("--effects", choices=["random", "fixed"], default="random")
    p_sim.add_argument("--family", choices=["ans", "kkp", "gspecm"], default="gspecm")
    p_sim.add_argument(
        "--methods",
        default="fgls,ltb,des",
        help="comma-separated subset of fgls,ltb,des",
    )
    p_sim.add_argument("--folds", type=int, default=5)
    p_sim.add_argument("--tau", type=float, default=0.01)
    _add_boost_options(p_sim)
    _add_common_output(p_sim)
    return parser


def _load_inputs(args):
    """Panel, weights, and the provenance block shared by fit/cv/transform."""
    data = read_panel_csv(args.panel)
    inputs = {"panel": {"path": args.panel, "sha256": file_sha256(args.panel)}}
    if args.centroids is not None:
        if args.knn is None:
            raise ValidationError("--centroids requires --knn")
        _, pts = read_centroid_csv(args.centroids, list(data.location_ids))
        weights = build_knn_weights(pts, args.knn)
        data = dataclasses.replace(data, centroids=pts)
        inputs["centroids"] = {
            "path": args.centroids,
            "sha256": file_sha256(args.centroids),
            "knn": args.knn,
        }
    else:
        weights = read_neighbor_csv(args.weights, list(data.location_ids))
        if args.row_normalize:
            weights = row_normalize(weights)
        inputs["weights"] = {
            "path": args.weights,
            "sha256": file_sha256(args.weights),
            "row_normalized": bool(args.row_normalize),
        }
    return data, weights, inputs


def _model_spec(args) -> ModelSpec:
    return ModelSpec(
        family=args.family,
        effects=args.effects,
        include_spatial_lags=not args.no_spatial_lags,
        include_intercept=not args.no_intercept,
    )


def _flags_echo(args, skip=("command",)) -> dict:
    return {
        key: val for key, val in sorted(vars(args).items()) if key not in skip
    }


def cmd_fit(args) -> int:
    start = time.time()
    data, weights, inputs = _load_inputs(args)
    if args.standardize:
        data = standardize_regressors(data)
    spec = _model_spec(args)
    config = BoostConfig(learning_rate=args.learning_rate, m_stop=args.mstop_budget)
    result = fit_model(
        data,
        weights,
        spec,
        config=config,
        cv_kind=FoldKind(args.cv),
        n_folds=args.folds,
        seed=args.seed,
        deselect_threshold=None if args.no_deselect else args.tau,
        baseline=args.baseline,
        threads=args.threads,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    payload = {
        "tool": tool_stamp(),
        "command": "fit",
        "seed": args.seed,
        "parameters": _flags_echo(args),
        "inputs": inputs,
        **fit_payload(result),
        "timing_seconds": time.time() - start,
    }
    write_json(os.path.join(args.out_dir, "report.json"), payload)
    write_fit_reports(args.out_dir, result)
    return 0


def cmd_cv(args) -> int:
    start = time.time()
    data, weights, inputs = _load_inputs(args)
    if args.standardize:
        data = standardize_regressors(data)
    spec = _model_spec(args)
    config = BoostConfig(learning_rate=args.learning_rate, m_stop=args.mstop_budget)
    design = augment_design(data, weights, spec)
    plan = build_fold_plan(data, FoldKind(args.cv), args.folds, args.seed)
    m_opt, curve = select_m_opt(
        data, design, weights, spec, config, plan, threads=args.threads
    )
    os.makedirs(args.out_dir, exist_ok=True)
    payload = {
        "tool": tool_stamp(),
        "command": "cv",
        "seed": args.seed,
        "parameters": _flags_echo(args),
        "inputs": inputs,
        "cross_validation": {
            "kind": plan.kind.value,
            "n_folds": plan.n_folds,
            "m_opt": m_opt,
            "curve": [float(v) for v in curve],
        },
        "timing_seconds": time.time() - start,
    }
    write_json(os.path.join(args.out_dir, "cv.json"), payload)
    write_csv(
        os.path.join(args.out_dir, "cv_curve.csv"),
        ["m", "cv_risk"],
        [(m, float(v)) for m, v in enumerate(curve)],
    )
    return 0


def cmd_transform(args) -> int:
    start = time.time()
    data, weights, inputs = _load_inputs(args)
    if args.standardize:
        data = standardize_regressors(data)
    spec = _model_spec(args)
    config = BoostConfig(learning_rate=args.learning_rate, m_stop=args.mstop_budget)
    design = augment_design(data, weights, spec)
    components = estimate_variance_components(data, design, weights, spec, config=config)
    td = whiten(data, design, weights, spec, components)
    os.makedirs(args.out_dir, exist_ok=True)
    payload = {
        "tool": tool_stamp(),
        "command": "transform",
        "seed": args.seed,
        "parameters": _flags_echo(args),
        "inputs": inputs,
        "variance_components": components_payload(components),
        "transform_fingerprint": td.fingerprint,
        "timing_seconds": time.time() - start,
    }
    write_json(os.path.join(args.out_dir, "transform.json"), payload)
    n = data.n_locations
    rows = []
    for ti, per in enumerate(data.period_ids):
        for li, loc in enumerate(data.location_ids):
            row_i = li + n * ti
            rows.append(
                [loc, per, float(td.response[row_i])]
                + [float(v) for v in td.design[row_i]]
            )
    write_csv(
        os.path.join(args.out_dir, "transformed.csv"),
        ["location", "period", "y_star"] + list(td.names),
        rows,
    )
    return 0


def cmd_simulate(args) -> int:
    start = time.time()
    methods = tuple(s.strip() for s in args.methods.split(",") if s.strip())
    unknown = [s for s in methods if s not in METHODS]
    if unknown:
        raise ValidationError(f"unknown methods {unknown}; choose from {METHODS}")
    cfg = DgpConfig(
        n_locations=args.n,
        n_periods=args.t,
        n_candidates=args.k,
        rho1=args.rho1,
        rho2=args.rho2,
        sigma_mu2=args.sigma_mu2,
        sigma_eps2=args.sigma_eps2,
        knn_k=args.knn,
        seed=args.seed,
        n_replications=args.nsim,
    )
    spec = ModelSpec(
        family=args.family,
        effects=args.effects,
        include_spatial_lags=True,
        include_intercept=args.effects == "random",
    )
    config = BoostConfig(learning_rate=args.learning_rate, m_stop=args.mstop_budget)
    metrics = run_experiment(
        cfg,
        methods=methods,
        spec=spec,
        boost_config=config,
        n_folds=args.folds,
        deselect_threshold=args.tau,
        threads=args.threads,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    payload = {
        "tool": tool_stamp(),
        "command": "simulate",
        "seed": args.seed,
        "parameters": _flags_echo(args),
        **metrics_payload(metrics),
        "timing_seconds": time.time() - start,
    }
    write_json(os.path.join(args.out_dir, "metrics.json"), payload)
    write_metrics_reports(args.out_dir, metrics)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "fit": cmd_fit,
        "cv": cmd_cv,
        "transform": cmd_transform,
        "simulate": cmd_simulate,
    }
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"spboost: invalid input: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"spboost: estimation failed: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"spboost: i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
