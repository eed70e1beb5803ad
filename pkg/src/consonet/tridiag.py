"""Tridiagonal matrices and the Thomas direct solver.

Band storage follows the usual convention: ``lower`` holds the
subdiagonal (length n-1), ``diag`` the main diagonal (length n) and
``upper`` the superdiagonal (length n-1).  The solver runs the classical
Thomas forward-elimination / back-substitution sweep in O(n) without
pivoting, which is safe for the diagonally dominant systems produced by
implicit diffusion stepping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError, ValidationError

# Pivots smaller than this fraction of the dominant diagonal entry are
# treated as numerically singular.
_PIVOT_FLOOR = 1e-14


@dataclass(frozen=True)
class Tridiagonal:
    """Banded n x n matrix with sub-, main- and superdiagonal arrays."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        diag = np.asarray(self.diag, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "upper", upper)
        n = diag.shape[0]
        if n < 1 or diag.ndim != 1:
            raise ValidationError("diagonal must be a non-empty 1-D array")
        if lower.shape != (max(n - 1, 0),) or upper.shape != (max(n - 1, 0),):
            raise ValidationError(
                f"band lengths {lower.shape[0]}/{upper.shape[0]} inconsistent "
                f"with diagonal length {n}"
            )
        if not (
            np.all(np.isfinite(lower))
            and np.all(np.isfinite(diag))
            and np.all(np.isfinite(upper))
        ):
            raise ValidationError("tridiagonal bands must be finite")

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Compute A @ x using only the three bands."""
        x = np.asarray(x, dtype=float)
        y = self.diag * x
        if self.n > 1:
            y[:-1] += self.upper * x[1:]
            y[1:] += self.lower * x[:-1]
        return y

    def dense(self) -> np.ndarray:
        """Materialize the full matrix (for tests and small oracles)."""
        a = np.diag(self.diag)
        if self.n > 1:
            a += np.diag(self.lower, k=-1)
            a += np.diag(self.upper, k=1)
        return a


def thomas_solve(a: Tridiagonal, rhs: np.ndarray) -> np.ndarray:
    """Solve the tridiagonal system a @ x = rhs in O(n).

    Raises SingularMatrixError if any pivot falls below
    ``1e-14 * max|diag|`` during elimination.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = a.n
    if rhs.shape != (n,):
        raise ValidationError(f"rhs shape {rhs.shape} does not match system size {n}")

    floor = _PIVOT_FLOOR * np.max(np.abs(a.diag))
    piv = np.empty(n)
    y = np.empty(n)

    piv[0] = a.diag[0]
    if abs(piv[0]) < floor:
        raise SingularMatrixError("zero pivot in row 0")
    y[0] = rhs[0]
    for i in range(1, n):
        w = a.lower[i - 1] / piv[i - 1]
        piv[i] = a.diag[i] - w * a.upper[i - 1]
        if abs(piv[i]) < floor:
            raise SingularMatrixError(f"zero pivot in row {i}")
        y[i] = rhs[i] - w * y[i - 1]

    x = np.empty(n)
    x[-1] = y[-1] / piv[-1]
    for i in range(n - 2, -1, -1):
        x[i] = (y[i] - a.upper[i] * x[i + 1]) / piv[i]
    return x
