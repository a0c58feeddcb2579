"""Structured operators on stacked panels.

All big operators here have Kronecker structure (a t x t time part crossed
with an n x n spatial part), so they are applied blockwise to reshaped
arrays instead of ever forming an (n*t, n*t) matrix.  With the period-major
stacking used in this package, ``v.reshape(t, n)`` puts one period per row,
which makes every application a small matrix product or a broadcast.

Three time projectors cover everything needed downstream:

* WITHIN removes each location's time mean (the fixed-effects demeaning).
* BETWEEN replaces each entry by its location's time mean.
* BETWEEN_CONTRAST combines the two as mean - deviation/(t-1); quadratic
  forms in it isolate the location-effect variance because the
  idiosyncratic part cancels in expectation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConditioningError, SingularFilterError, ValidationError
from .weights import SpatialWeights

if TYPE_CHECKING:  # pragma: no cover
    from .gmm import VarianceComponents

EIGENVALUE_FLOOR = 1e-10  # relative to the largest eigenvalue of a block


class ProjectorKind(enum.Enum):
    WITHIN = "within"
    BETWEEN = "between"
    BETWEEN_CONTRAST = "between_contrast"


@dataclass(frozen=True)
class TimeProjector:
    """One of the three time-direction projections, applied blockwise."""

    kind: ProjectorKind
    n_locations: int
    n_periods: int

    def __post_init__(self):
        if self.n_locations < 1 or self.n_periods < 1:
            raise ValidationError("projector dimensions must be positive")
        if self.kind is not ProjectorKind.BETWEEN and self.n_periods < 2:
            raise ValidationError(
                f"{self.kind.value} projector needs at least two periods"
            )

    def apply(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        n, t = self.n_locations, self.n_periods
        if v.shape[0] != n * t:
            raise ValidationError(
                f"stacked array has {v.shape[0]} rows, expected {n * t}"
            )
        shape = (t, n) if v.ndim == 1 else (t, n, v.shape[1])
        cube = v.reshape(shape)
        mean = cube.mean(axis=0, keepdims=True)
        if self.kind is ProjectorKind.WITHIN:
            out = cube - mean
        elif self.kind is ProjectorKind.BETWEEN:
            out = np.broadcast_to(mean, shape)
        else:
            out = mean - (cube - mean) / (t - 1)
        return np.ascontiguousarray(out).reshape(v.shape)


@dataclass
class SpatialFilter:
    """The filter (I - rho * W), with a cached LU factorization for solves."""

    rho: float
    weights: SpatialWeights

    def __post_init__(self):
        if not np.isfinite(self.rho) or abs(self.rho) >= 1:
            raise ValidationError(f"spatial parameter must satisfy |rho| < 1, got {self.rho}")
        self._matrix = np.eye(self.weights.n_locations) - self.rho * self.weights.matrix
        try:
            self._lu = lu_factor(self._matrix)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise SingularFilterError(str(exc)) from None
        diag = np.abs(np.diag(self._lu[0]))
        if diag.min() <= 1e-14 * max(diag.max(), 1.0):
            raise SingularFilterError(
                f"filter I - {self.rho} * W is numerically singular"
            )

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def apply(self, values: np.ndarray, n_periods: int = 1) -> np.ndarray:
        """(I - rho W) v within each period block."""
        v = np.asarray(values, dtype=float)
        n = self.weights.n_locations
        if v.shape[0] != n * n_periods:
            raise ValidationError(f"expected {n * n_periods} rows, got {v.shape[0]}")
        cube = v.reshape(n_periods, n, -1)
        out = np.einsum("ij,tjk->tik", self._matrix, cube)
        return out.reshape(v.shape)

    def solve(self, values: np.ndarray, n_periods: int = 1) -> np.ndarray:
        """(I - rho W)^{-1} v within each period block."""
        v = np.asarray(values, dtype=float)
        n = self.weights.n_locations
        if v.shape[0] != n * n_periods:
            raise ValidationError(f"expected {n * n_periods} rows, got {v.shape[0]}")
        cube = v.reshape(n_periods, n, -1)
        out = np.stack([lu_solve(self._lu, block) for block in cube])
        return out.reshape(v.shape)


def symmetric_sqrt(block: np.ndarray, what: str) -> np.ndarray:
    """Symmetric square root of a symmetric positive definite matrix.

    Refuses blocks whose smallest eigenvalue falls below a relative floor
    instead of regularizing them silently.
    """
    sym = 0.5 * (block + block.T)
    eigval, eigvec = np.linalg.eigh(sym)
    floor = EIGENVALUE_FLOOR * max(eigval[-1], 0.0)
    if eigval[0] <= floor:
        raise ConditioningError(
            f"{what} is numerically rank deficient", min_eigenvalue=float(eigval[0])
        )
    return (eigvec * np.sqrt(eigval)) @ eigvec.T


class WhitenerMode(enum.Enum):
    RANDOM_GLS = "random_gls"
    FIXED_WITHIN = "fixed_within"


@dataclass(frozen=True)
class WhiteningOperator:
    """Linear map that turns the model's error covariance into the identity.

    Random effects: applies one n x n block on the between (time-mean)
    subspace and another on the within subspace; together they realize the
    inverse square root of the stacked error covariance.  Squaring the
    operator therefore reproduces the full covariance inverse.

    Fixed effects: applies the demeaning projector followed by the
    idiosyncratic spatial filter; the result is the within-whitened panel
    (up to the constant idiosyncratic variance, which affects no
    least-squares or boosting decision).
    """

    mode: WhitenerMode
    between_block: np.ndarray | None
    within_block: np.ndarray
    n_periods: int

    def __post_init__(self):
        n = self.within_block.shape[0]
        if self.within_block.shape != (n, n):
            raise ValidationError("within block must be square")
        if self.mode is WhitenerMode.RANDOM_GLS:
            if self.between_block is None or self.between_block.shape != (n, n):
                raise ValidationError("random-effects whitener needs a square between block")
        if self.n_periods < 2:
            raise ValidationError("whitening needs at least two periods")

    @property
    def n_locations(self) -> int:
        return self.within_block.shape[0]

    def apply(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        n, t = self.n_locations, self.n_periods
        if v.shape[0] != n * t:
            raise ValidationError(f"expected {n * t} rows, got {v.shape[0]}")
        cube = v.reshape(t, n, -1)
        mean = cube.mean(axis=0)
        deviation = cube - mean
        dev_part = np.einsum("ij,tjk->tik", self.within_block, deviation)
        if self.mode is WhitenerMode.RANDOM_GLS:
            mean_part = self.between_block @ mean
            out = dev_part + mean_part
        else:
            out = dev_part
        return np.ascontiguousarray(out).reshape(v.shape)


def random_effects_whitener(
    components: "VarianceComponents", weights: SpatialWeights, n_periods: int
) -> WhiteningOperator:
    """Inverse-square-root whitener for the random-effects error covariance.

    The covariance has one n x n block on the between subspace,
    ``t * s2_loc * inv(A'A) + s2_idio * inv(B'B)`` with A and B the two
    spatial filters, and ``s2_idio * inv(B'B)`` on the within subspace.
    Both blocks are inverted and square-rooted by eigendecomposition.
    """
    if n_periods < 2:
        raise ValidationError("random-effects whitening needs at least two periods")
    if components.sigma_eps2 is None or components.sigma_eps2 <= 0:
        raise ValidationError("idiosyncratic variance must be positive")
    if components.rho1 is None or components.sigma_mu2 is None:
        raise ValidationError("random-effects whitening needs the location-effect parameters")
    if components.sigma_mu2 < 0:
        raise ValidationError("location-effect variance must be non-negative")
    n = weights.n_locations
    eye = np.eye(n)
    filt_idio = SpatialFilter(components.rho2, weights)
    bb = filt_idio.matrix.T @ filt_idio.matrix
    bb_inv = np.linalg.solve(bb, eye)
    between_cov = components.sigma_eps2 * bb_inv
    if components.sigma_mu2 > 0:
        filt_loc = SpatialFilter(components.rho1, weights)
        aa = filt_loc.matrix.T @ filt_loc.matrix
        aa_inv = np.linalg.solve(aa, eye)
        between_cov = between_cov + n_periods * components.sigma_mu2 * aa_inv
    between_inv = np.linalg.solve(0.5 * (between_cov + between_cov.T), eye)
    within_inv = bb / components.sigma_eps2
    return WhiteningOperator(
        mode=WhitenerMode.RANDOM_GLS,
        between_block=symmetric_sqrt(between_inv, "between covariance block"),
        within_block=symmetric_sqrt(within_inv, "within covariance block"),
        n_periods=n_periods,
    )


def fixed_effects_whitener(
    components: "VarianceComponents", weights: SpatialWeights, n_periods: int
) -> WhiteningOperator:
    """Demeaning plus idiosyncratic spatial filtering for fixed effects."""
    if n_periods < 2:
        raise ValidationError("fixed-effects whitening needs at least two periods")
    filt = SpatialFilter(components.rho2, weights)
    return WhiteningOperator(
        mode=WhitenerMode.FIXED_WITHIN,
        between_block=None,
        within_block=filt.matrix.copy(),
        n_periods=n_periods,
    )
