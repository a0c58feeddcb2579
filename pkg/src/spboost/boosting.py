"""Componentwise L2 boosting with deselection.

Each iteration fits every candidate column to the current residual by a
univariate no-intercept least squares, keeps the one with the largest
squared-correlation score (equivalently the smallest residual sum of
squares; ties go to the lower column index), and moves the fit a fraction
``learning_rate`` of the way toward that univariate solution.  The
empirical risk ||y - eta||^2 / n is recorded after every iteration.

Deselection afterwards attributes the total risk reduction to columns: a
column keeps its place only when its attributable share reaches the
threshold fraction of the total, and the model is re-boosted on the
surviving columns with the same iteration count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoLearnerError, RankError, ValidationError
from .transform import TransformedData


@dataclass(frozen=True)
class BoostConfig:
    """Boosting hyperparameters: step length and iteration budget."""

    learning_rate: float = 0.1
    m_stop: int = 1000

    def __post_init__(self):
        if not (0 < self.learning_rate <= 1):
            raise ValidationError(
                f"learning_rate must be in (0, 1], got {self.learning_rate}"
            )
        if self.m_stop < 1:
            raise ValidationError(f"m_stop must be at least 1, got {self.m_stop}")


@dataclass(frozen=True)
class BoostFit:
    """Result of a boosting run.

    ``selection_path[m]`` is the column index chosen at iteration m and
    ``increments[m]`` the coefficient increment applied there, so replaying
    the path reproduces ``coefficients`` exactly.  ``risk_path`` starts at
    the iteration-zero risk and has one entry per iteration after that.
    """

    coefficients: np.ndarray
    names: tuple[str, ...]
    selection_path: np.ndarray
    increments: np.ndarray
    risk_path: np.ndarray
    learning_rate: float
    offset: float = 0.0
    excluded: tuple[str, ...] = ()

    @property
    def m_used(self) -> int:
        return len(self.selection_path)

    @property
    def selected(self) -> np.ndarray:
        """Boolean mask of columns with a nonzero coefficient."""
        return self.coefficients != 0.0


@dataclass(frozen=True)
class DeselectionResult:
    """Risk-reduction attribution and the re-boosted sparse fit."""

    attributable: np.ndarray
    names: tuple[str, ...]
    retained: tuple[str, ...]
    threshold: float
    total_reduction: float
    refit: BoostFit | None


def _boost_path(
    response: np.ndarray,
    design: np.ndarray,
    learning_rate: float,
    n_iterations: int,
    active: np.ndarray | None = None,
    heldout: tuple[np.ndarray, np.ndarray] | None = None,
    warn_label: str | None = None,
):
    """Run the componentwise updates on plain arrays.

    Returns (coefficients, selection_path, increments, risk_path,
    heldout_risk_path).  ``active`` is a boolean mask of selectable columns;
    identically zero columns are dropped from it with a warning.  When
    ``heldout`` is given, the held-out risk is tracked incrementally after
    every iteration (entry 0 is the risk of the zero model).
    """
    y = np.asarray(response, dtype=float)
    z = np.asarray(design, dtype=float)
    n, k = z.shape
    selectable = np.ones(k, dtype=bool) if active is None else active.copy()
    norms2 = np.einsum("ij,ij->j", z, z)
    dead = selectable & (norms2 == 0.0)
    if dead.any():
        label = f" ({warn_label})" if warn_label else ""
        warnings.warn(
            f"excluding {int(dead.sum())} identically zero column(s) from "
            f"boosting{label}: indices {np.nonzero(dead)[0][:8].tolist()}"
        )
        selectable &= ~dead
    if not selectable.any():
        raise NoLearnerError("no usable candidate column: all are identically zero")

    resid = y.copy()
    coef = np.zeros(k)
    selection = np.empty(n_iterations, dtype=np.int64)
    increments = np.empty(n_iterations)
    risk = np.empty(n_iterations + 1)
    risk[0] = (resid @ resid) / n
    if heldout is not None:
        y_out, z_out = heldout
        eta_out = np.zeros(y_out.shape[0])
        risk_out = np.empty(n_iterations + 1)
        d_out = y_out - eta_out
        risk_out[0] = (d_out @ d_out) / y_out.shape[0]
    else:
        risk_out = None

    inv_norms2 = np.zeros(k)
    inv_norms2[selectable] = 1.0 / norms2[selectable]
    neg_inf = np.full(k, -np.inf)
    for m in range(n_iterations):
        corr = z.T @ resid
        scores = np.where(selectable, corr * corr * inv_norms2, neg_inf)
        j = int(np.argmax(scores))
        step = learning_rate * corr[j] * inv_norms2[j]
        coef[j] += step
        resid -= step * z[:, j]
        selection[m] = j
        increments[m] = step
        risk[m + 1] = (resid @ resid) / n
        if risk_out is not None:
            eta_out += step * z_out[:, j]
            d_out = y_out - eta_out
            risk_out[m + 1] = (d_out @ d_out) / y_out.shape[0]
    return coef, selection, increments, risk, risk_out


def boost(
    td: TransformedData,
    config: BoostConfig = BoostConfig(),
    active_columns: Sequence[str] | None = None,
    n_iterations: int | None = None,
) -> BoostFit:
    """Componentwise L2 boosting on transformed data.

    Parameters
    ----------
    td : TransformedData
    config : BoostConfig
    active_columns : optional sequence of column names
        Restrict selection to these columns (used by deselection refits).
        Other columns keep coefficient zero.
    n_iterations : optional int
        Override the number of iterations (defaults to ``config.m_stop``);
        0 is allowed and produces the zero model.
    """
    if n_iterations is None:
        n_iterations = config.m_stop
    if n_iterations < 0:
        raise ValidationError("n_iterations must be non-negative")
    active = None
    if active_columns is not None:
        index = {name: i for i, name in enumerate(td.names)}
        unknown = [s for s in active_columns if s not in index]
        if unknown:
            raise ValidationError(f"unknown column names: {unknown[:5]}")
        active = np.zeros(td.n_columns, dtype=bool)
        for s in active_columns:
            active[index[s]] = True
        if not active.any():
            raise NoLearnerError("active column set is empty")

    norms2 = np.einsum("ij,ij->j", td.design, td.design)
    dead_mask = (norms2 == 0.0) & (np.ones_like(norms2, bool) if active is None else active)
    excluded = tuple(td.names[i] for i in np.nonzero(dead_mask)[0])
    coef, selection, increments, risk, _ = _boost_path(
        td.response, td.design, config.learning_rate, n_iterations, active=active
    )
    return BoostFit(
        coefficients=coef,
        names=td.names,
        selection_path=selection,
        increments=increments,
        risk_path=risk,
        learning_rate=config.learning_rate,
        excluded=excluded,
    )


def deselect(
    td: TransformedData,
    config: BoostConfig,
    fit: BoostFit,
    threshold: float = 0.01,
) -> DeselectionResult:
    """Drop columns with a negligible share of the total risk reduction.

    Each iteration's risk reduction is attributed to the column selected
    there; columns whose attributable total falls below ``threshold`` times
    the overall reduction are removed and the model is boosted again on the
    survivors with the same iteration count and step length.
    """
    if not (0 < threshold < 1):
        raise ValidationError(f"threshold must be in (0, 1), got {threshold}")
    if fit.names != td.names:
        raise ValidationError("fit and transformed data have different columns")
    k = td.n_columns
    attributable = np.zeros(k)
    reductions = fit.risk_path[:-1] - fit.risk_path[1:]
    np.add.at(attributable, fit.selection_path, reductions)
    total = float(fit.risk_path[0] - fit.risk_path[-1])
    if total <= 0.0:
        warnings.warn(
            "boosting achieved no risk reduction; deselection returns the empty model"
        )
        return DeselectionResult(
            attributable=attributable,
            names=td.names,
            retained=(),
            threshold=threshold,
            total_reduction=total,
            refit=None,
        )
    keep = attributable >= threshold * total
    retained = tuple(td.names[i] for i in np.nonzero(keep)[0])
    if not retained:
        warnings.warn("every column fell below the deselection threshold")
        refit = None
    else:
        refit = boost(td, config, active_columns=retained, n_iterations=fit.m_used)
    return DeselectionResult(
        attributable=attributable,
        names=td.names,
        retained=retained,
        threshold=threshold,
        total_reduction=total,
        refit=refit,
    )


def fgls_baseline(td: TransformedData) -> np.ndarray:
    """Least squares on the whitened data (the non-sparse benchmark).

    Requires more observations than columns and a full-rank design; when
    either fails there is no unique solution and a RankError is raised,
    which callers report as the method being unavailable.
    """
    z, y = td.design, td.response
    n, k = z.shape
    if k >= n:
        raise RankError(
            f"least squares needs fewer columns than observations, got {k} >= {n}"
        )
    coef, _, rank, _ = np.linalg.lstsq(z, y, rcond=None)
    if rank < k:
        raise RankError(f"transformed design has rank {rank} < {k} columns")
    return coef
