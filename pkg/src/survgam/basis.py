"""Cubic B-spline basis with a difference penalty, split into null and range parts.

The log baseline hazard is expanded in B-splines with interior knots at
quantiles of the event times.  The penalty is a squared divided-difference
form on the coefficient sequence, taken with respect to the Greville
abscissae so that its null space maps exactly onto low-degree polynomials in
time even when the knots are unequally spaced (for the default order 2:
constants and linear trends are unpenalized).  An eigendecomposition then
reparameterizes the coefficients into an unpenalized "fixed" block and a
"random" block carrying an identity penalty, which is the form the fitting
engines consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .errors import DataValidationError


@dataclass(frozen=True)
class SplineBasis:
    """Knot layout of the log-hazard smoother on [0, upper]."""

    knots: np.ndarray  # full knot vector incl. boundary multiplicities
    degree: int
    dim: int
    penalty_order: int
    upper: float

    @property
    def greville(self) -> np.ndarray:
        k = self.degree
        t = self.knots
        return np.array([t[j + 1 : j + k + 1].mean() for j in range(self.dim)])


@dataclass(frozen=True)
class PenaltyDecomposition:
    """Change of coordinates diagonalizing the difference penalty.

    Columns of ``fixed_transform`` span the penalty null space (dimension =
    penalty order); ``random_transform`` maps d_R free coefficients onto the
    penalized range so their quadratic penalty is exactly ||.||^2.
    """

    fixed_transform: np.ndarray  # (dim, d_F)
    random_transform: np.ndarray  # (dim, d_R)
    penalty: np.ndarray  # raw (dim, dim) penalty S, kept for diagnostics

    @property
    def d_fixed(self) -> int:
        return self.fixed_transform.shape[1]

    @property
    def d_random(self) -> int:
        return self.random_transform.shape[1]

    def to_raw(self, fixed_coef: np.ndarray, random_coef: np.ndarray) -> np.ndarray:
        return self.fixed_transform @ fixed_coef + self.random_transform @ random_coef

    def from_raw(self, coef: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        full = np.hstack([self.fixed_transform, self.random_transform])
        c = np.linalg.solve(full, coef)
        return c[: self.d_fixed], c[self.d_fixed :]


def _divided_difference_matrix(xi: np.ndarray, order: int) -> np.ndarray:
    """Rows are Newton divided differences of the given order over nodes xi.

    Annihilates coefficient sequences polynomial in xi of degree < order.
    """
    k = xi.shape[0]
    d = np.eye(k)
    for level in range(1, order + 1):
        rows = k - level
        nxt = np.zeros((rows, k))
        for j in range(rows):
            nxt[j] = (d[j + 1] - d[j]) / (xi[j + level] - xi[j])
        d = nxt
    return d


def build_basis(
    times: np.ndarray,
    dim: int = 10,
    penalty_order: int = 2,
    degree: int = 3,
    upper: float | None = None,
) -> tuple[SplineBasis, PenaltyDecomposition]:
    """Construct the basis and its penalty decomposition from observed times.

    Interior knots sit at equally spaced quantiles of ``times`` (pass event
    times so resolution concentrates where deaths are); boundary knots at 0
    and ``upper`` (default max(times)).
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise DataValidationError("no times supplied for basis construction")
    if np.any(times < 0):
        raise DataValidationError("basis times must be nonnegative")
    if dim < penalty_order + 2:
        raise DataValidationError(
            f"basis dim {dim} too small for penalty order {penalty_order} (need >= {penalty_order + 2})"
        )
    hi = float(np.max(times) if upper is None else upper)
    if hi <= 0:
        raise DataValidationError("basis upper boundary must be positive")
    if times.size > 1 and np.ptp(times) == 0.0:
        raise DataValidationError("times are all identical; cannot place interior knots")

    n_interior = dim - degree - 1
    if n_interior > 0:
        probs = np.arange(1, n_interior + 1) / (n_interior + 1)
        interior = np.quantile(times, probs)
        interior = interior[(interior > 0) & (interior < hi)]
        interior = np.unique(interior)
        if interior.size < n_interior:
            raise DataValidationError(
                f"only {interior.size} distinct interior knots available for dim {dim}; "
                "reduce dim or supply more varied times"
            )
    else:
        interior = np.empty(0)
    knots = np.concatenate(
        [np.zeros(degree + 1), interior, np.full(degree + 1, hi)]
    )

    sb = SplineBasis(knots=knots, degree=degree, dim=dim, penalty_order=penalty_order, upper=hi)

    xi = sb.greville
    d_mat = _divided_difference_matrix(xi, penalty_order)
    penalty = d_mat.T @ d_mat

    # null space: polynomials in the Greville abscissae, orthonormalized
    vander = np.vander(xi, N=penalty_order, increasing=True)
    q_fixed, _ = np.linalg.qr(vander)
    # range space from the nonzero eigenpairs, scaled to an identity penalty
    evals, evecs = np.linalg.eigh(penalty)
    d_random = dim - penalty_order
    idx = np.argsort(evals)[penalty_order:]
    idx = idx[np.argsort(evals[idx])]
    if np.any(evals[idx] <= 0):
        raise DataValidationError("penalty rank deficiency beyond its polynomial null space")
    random_transform = evecs[:, idx] / np.sqrt(evals[idx])[None, :]
    assert random_transform.shape == (dim, d_random)

    return sb, PenaltyDecomposition(
        fixed_transform=q_fixed,
        random_transform=random_transform,
        penalty=penalty,
    )


def raw_design(sb: SplineBasis, t: np.ndarray) -> np.ndarray:
    """Dense B-spline design matrix at times t, clamped to [0, upper]."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, sb.upper)
    return BSpline.design_matrix(t, sb.knots, sb.degree, extrapolate=False).toarray()


def evaluate_basis(
    sb: SplineBasis, pd: PenaltyDecomposition, t: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed and random design blocks at times t (clamped at the boundaries)."""
    b = raw_design(sb, t)
    return b @ pd.fixed_transform, b @ pd.random_transform
