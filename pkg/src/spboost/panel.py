"""Balanced panel data and design construction.

Stacking convention used everywhere in this package: observations are ordered
period-major, so the vector entry for location i in period t sits at index
``i + n_locations * t``.  Reshaping a stacked vector to
``(n_periods, n_locations)`` therefore puts one period per row.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentError,
    FixedEffectsInfeasibleError,
    ParseError,
    UnbalancedPanelError,
    ValidationError,
)
from .weights import SpatialWeights

INTERCEPT_NAME = "intercept"
LAG_PREFIX = "W_"


class Family(str, enum.Enum):
    """Which spatial autocorrelation parameters the error model carries.

    ANS restricts the location-effect process to have no spatial lag
    (its autocorrelation parameter is pinned at zero), KKP ties both
    processes to a single shared parameter, and GSPECM leaves the two
    parameters free.
    """

    ANS = "ans"
    KKP = "kkp"
    GSPECM = "gspecm"


class Effects(str, enum.Enum):
    RANDOM = "random"
    FIXED = "fixed"


@dataclass(frozen=True)
class ModelSpec:
    """Estimation options: family, effects, and design content."""

    family: Family = Family.GSPECM
    effects: Effects = Effects.RANDOM
    include_spatial_lags: bool = True
    include_intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "effects", Effects(self.effects))
        if self.effects is Effects.FIXED and self.include_intercept:
            raise FixedEffectsInfeasibleError(INTERCEPT_NAME)


@dataclass(frozen=True)
class PanelDataset:
    """A balanced panel in stacked period-major order.

    Parameters
    ----------
    response : ndarray of shape (n_locations * n_periods,)
    regressors : ndarray of shape (n_locations * n_periods, p)
    regressor_names : sequence of str
    location_ids, period_ids : sequences of str labels
    centroids : optional ndarray of shape (n_locations, 2)
    """

    response: np.ndarray
    regressors: np.ndarray
    regressor_names: tuple[str, ...]
    location_ids: tuple[str, ...]
    period_ids: tuple[str, ...]
    centroids: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.response, dtype=float)
        x = np.asarray(self.regressors, dtype=float)
        names = tuple(str(s) for s in self.regressor_names)
        locs = tuple(str(s) for s in self.location_ids)
        pers = tuple(str(s) for s in self.period_ids)
        n, t = len(locs), len(pers)
        if n < 1 or t < 1:
            raise ValidationError("panel needs at least one location and one period")
        if len(set(locs)) != n:
            raise ValidationError("duplicate location ids")
        if len(set(pers)) != t:
            raise ValidationError("duplicate period ids")
        if y.ndim != 1 or y.shape[0] != n * t:
            raise ValidationError(
                f"response has shape {y.shape}, expected ({n * t},) for "
                f"{n} locations x {t} periods"
            )
        if x.ndim != 2 or x.shape[0] != n * t:
            raise ValidationError(f"regressors have shape {x.shape}, expected ({n * t}, p)")
        if x.shape[1] != len(names):
            raise ValidationError(
                f"{x.shape[1]} regressor columns but {len(names)} names"
            )
        if len(set(names)) != len(names):
            raise ValidationError("duplicate regressor names")
        if not np.all(np.isfinite(y)):
            raise ValidationError("response contains non-finite entries")
        if not np.all(np.isfinite(x)):
            raise ValidationError("regressors contain non-finite entries")
        cent = self.centroids
        if cent is not None:
            cent = np.asarray(cent, dtype=float)
            if cent.shape != (n, 2):
                raise ValidationError(
                    f"centroids have shape {cent.shape}, expected ({n}, 2)"
                )
            if not np.all(np.isfinite(cent)):
                raise ValidationError("centroids contain non-finite coordinates")
            cent = cent.copy()
            cent.setflags(write=False)
        y = y.copy()
        x = x.copy()
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "regressors", x)
        object.__setattr__(self, "regressor_names", names)
        object.__setattr__(self, "location_ids", locs)
        object.__setattr__(self, "period_ids", pers)
        object.__setattr__(self, "centroids", cent)

    @property
    def n_locations(self) -> int:
        return len(self.location_ids)

    @property
    def n_periods(self) -> int:
        return len(self.period_ids)

    @property
    def n_obs(self) -> int:
        return self.n_locations * self.n_periods


@dataclass(frozen=True)
class AugmentedDesign:
    """Candidate design: intercept, regressors, and their spatial lags.

    ``roles`` marks each column as 'intercept', 'regressor', or 'spatial_lag'.
    """

    columns: np.ndarray
    names: tuple[str, ...]
    roles: tuple[str, ...]

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=float)
        if cols.ndim != 2:
            raise ValidationError("design must be a 2-d array")
        if len(self.names) != cols.shape[1] or len(self.roles) != cols.shape[1]:
            raise AlignmentError("design names/roles do not match the column count")
        cols = cols.copy()
        cols.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "roles", tuple(self.roles))

    @property
    def n_columns(self) -> int:
        return self.columns.shape[1]


def spatial_lag(values: np.ndarray, weights: SpatialWeights, n_periods: int) -> np.ndarray:
    """Apply the weight matrix within each period block.

    Works on a stacked vector (n*t,) or matrix (n*t, k); never materializes
    the full block-diagonal operator.
    """
    v = np.asarray(values, dtype=float)
    n = weights.n_locations
    if v.shape[0] != n * n_periods:
        raise ValidationError(
            f"stacked array has {v.shape[0]} rows, expected {n * n_periods}"
        )
    if v.ndim == 1:
        per_period = v.reshape(n_periods, n)
        return (per_period @ weights.matrix.T).reshape(-1)
    per_period = v.reshape(n_periods, n, -1)
    out = np.einsum("ij,tjk->tik", weights.matrix, per_period)
    return out.reshape(v.shape[0], v.shape[1])


def _time_invariant_columns(x: np.ndarray, n: int, t: int) -> np.ndarray:
    """Boolean mask of columns constant over time within every location."""
    cube = x.reshape(t, n, -1)
    return np.all(cube == cube[0], axis=(0, 1))


def augment_design(
    data: PanelDataset, weights: SpatialWeights, spec: ModelSpec
) -> AugmentedDesign:
    """Build the candidate column set for a model specification.

    Columns are ordered: intercept (if any), the regressors as given, then
    one spatial lag per regressor (if requested).  Under fixed effects any
    regressor that is time-invariant for every location is rejected, because
    the within transform would map it to an identically zero column.
    """
    if weights.n_locations != data.n_locations:
        raise ValidationError(
            f"weight matrix is {weights.n_locations}x{weights.n_locations} but the "
            f"panel has {data.n_locations} locations"
        )
    x = data.regressors
    if spec.effects is Effects.FIXED:
        if data.n_periods < 2:
            raise ValidationError("fixed effects need at least two periods")
        invariant = _time_invariant_columns(x, data.n_locations, data.n_periods)
        if invariant.any():
            bad = data.regressor_names[int(np.argmax(invariant))]
            raise FixedEffectsInfeasibleError(bad)

    blocks = []
    names: list[str] = []
    roles: list[str] = []
    if spec.include_intercept:
        if INTERCEPT_NAME in data.regressor_names:
            raise ValidationError(
                f"regressor name {INTERCEPT_NAME!r} collides with the intercept column"
            )
        blocks.append(np.ones((data.n_obs, 1)))
        names.append(INTERCEPT_NAME)
        roles.append("intercept")
    blocks.append(x)
    names.extend(data.regressor_names)
    roles.extend(["regressor"] * len(data.regressor_names))
    if spec.include_spatial_lags:
        lag_names = [LAG_PREFIX + s for s in data.regressor_names]
        clash = set(lag_names) & set(names)
        if clash:
            raise ValidationError(f"spatial lag names collide with regressors: {sorted(clash)}")
        blocks.append(spatial_lag(x, weights, data.n_periods))
        names.extend(lag_names)
        roles.extend(["spatial_lag"] * len(lag_names))
    return AugmentedDesign(np.hstack(blocks), tuple(names), tuple(roles))


def read_panel_csv(path: str) -> PanelDataset:
    """Read a long-format panel CSV with header ``location,period,y,<x...>``.

    Locations and periods are ordered by first appearance in the file; the
    panel must be balanced (every location observed in every period, no
    duplicates).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", row=1)
        header = [c.strip() for c in header]
        if header[:3] != ["location", "period", "y"]:
            raise ParseError("expected header to start with 'location,period,y'", row=1)
        xnames = header[3:]
        if len(set(xnames)) != len(xnames):
            raise ParseError("duplicate regressor names in header", row=1)
        records: dict[tuple[str, str], tuple[float, list[float]]] = {}
        loc_order: list[str] = []
        per_order: list[str] = []
        loc_seen: set[str] = set()
        per_seen: set[str] = set()
        for rownum, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(rec)}", row=rownum
                )
            loc, per = rec[0].strip(), rec[1].strip()
            try:
                yval = float(rec[2])
                xvals = [float(v) for v in rec[3:]]
            except ValueError as exc:
                raise ParseError(str(exc), row=rownum) from None
            key = (loc, per)
            if key in records:
                raise UnbalancedPanelError(
                    f"duplicate observation for location {loc!r}, period {per!r} "
                    f"at row {rownum}"
                )
            records[key] = (yval, xvals)
            if loc not in loc_seen:
                loc_seen.add(loc)
                loc_order.append(loc)
            if per not in per_seen:
                per_seen.add(per)
                per_order.append(per)

    n, t = len(loc_order), len(per_order)
    if n == 0:
        raise ParseError("file contains a header but no data rows", row=2)
    if len(records) != n * t:
        for per in per_order:
            for loc in loc_order:
                if (loc, per) not in records:
                    raise UnbalancedPanelError(
                        f"missing observation for location {loc!r}, period {per!r}"
                    )
    y = np.empty(n * t)
    x = np.empty((n * t, len(xnames)))
    for ti, per in enumerate(per_order):
        for li, loc in enumerate(loc_order):
            yval, xvals = records[(loc, per)]
            y[li + n * ti] = yval
            x[li + n * ti] = xvals
    return PanelDataset(
        response=y,
        regressors=x,
        regressor_names=tuple(xnames),
        location_ids=tuple(loc_order),
        period_ids=tuple(per_order),
    )


def write_panel_csv(path: str, data: PanelDataset) -> None:
    """Write a panel back to the long CSV format accepted by read_panel_csv."""
    n = data.n_locations
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["location", "period", "y"] + list(data.regressor_names))
        for ti, per in enumerate(data.period_ids):
            for li, loc in enumerate(data.location_ids):
                row = li + n * ti
                writer.writerow(
                    [loc, per, repr(float(data.response[row]))]
                    + [repr(float(v)) for v in data.regressors[row]]
                )
