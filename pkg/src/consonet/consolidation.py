"""Physical problem definition for 1-D single-drainage consolidation.

The governing diffusion equation for excess pore water pressure u(z,t) is
du/dt = cv * d2u/dz2 on 0 <= z <= h_dr, with u = 0 at the drained top
boundary (z = 0) and du/dz = 0 at the impermeable bottom (z = h_dr).

Internal unit system: pressures in Pa, lengths in m, times in years,
cv in m^2/year.  With the default drainage length h_dr = 1 m the physical
depth coincides with the normalized depth z/h_dr in [0, 1].

This module provides the classical series solution (uniform initial
pressure only), the dimensionless time factor, the average degree of
consolidation, and the second-order central-difference system matrix used
by the time integrators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ValidationError
from .tridiag import Tridiagonal

#: Default relative truncation tolerance for the analytical series.
SERIES_TOL = 1e-12
#: Default safety limit on the number of series terms.
SERIES_MAX_TERMS = 10_000


@dataclass(frozen=True)
class ConsolidationCase:
    """One consolidation problem instance.

    Attributes
    ----------
    cv : float
        Coefficient of consolidation, m^2/year.
    h_dr : float
        Drainage path length, m.
    u0 : np.ndarray
        Initial excess pore pressure at the sensor depths, Pa.
    sensor_depths : np.ndarray
        Strictly increasing normalized depths in [0, 1]; the first must
        be 0 and the last 1.
    """

    cv: float
    h_dr: float
    u0: np.ndarray
    sensor_depths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u0", np.asarray(self.u0, dtype=float))
        object.__setattr__(
            self, "sensor_depths", np.asarray(self.sensor_depths, dtype=float)
        )
        if self.cv <= 0:
            raise ValidationError(f"cv must be positive, got {self.cv}")
        if self.h_dr <= 0:
            raise ValidationError(f"h_dr must be positive, got {self.h_dr}")
        m = self.u0.shape[0]
        if m < 2 or self.sensor_depths.shape != (m,):
            raise ValidationError(
                "u0 and sensor_depths must be 1-D arrays of equal length >= 2"
            )
        d = self.sensor_depths
        if d[0] != 0.0 or d[-1] != 1.0 or np.any(np.diff(d) <= 0):
            raise ValidationError(
                "sensor_depths must increase strictly from 0 to 1"
            )
        if not np.all(np.isfinite(self.u0)):
            raise ValidationError("u0 must be finite")

    @property
    def m(self) -> int:
        """Number of sensor locations."""
        return self.u0.shape[0]


def uniform_case(
    u0_const: float, cv: float, m: int = 100, h_dr: float = 1.0
) -> ConsolidationCase:
    """Build a case with a constant initial pressure at m equal-spaced sensors."""
    depths = np.linspace(0.0, 1.0, m)
    return ConsolidationCase(cv=cv, h_dr=h_dr, u0=np.full(m, float(u0_const)),
                             sensor_depths=depths)


@dataclass
class SolutionField:
    """Excess pore pressure evaluated on a depth x time grid.

    ``values[i, j]`` is the pressure at ``depths[i]`` and ``times[j]`` in
    Pa.  ``tv_times`` carries the dimensionless time factor for each
    column.  ``meta`` records solver provenance (method, step counts,
    wall time, dense-output mode).
    """

    depths: np.ndarray
    times: np.ndarray
    values: np.ndarray
    tv_times: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.tv_times = np.asarray(self.tv_times, dtype=float)
        nz, nt = self.depths.shape[0], self.times.shape[0]
        if self.values.shape != (nz, nt) or self.tv_times.shape != (nt,):
            raise ValidationError(
                f"field shape {self.values.shape} inconsistent with grid "
                f"({nz}, {nt})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("solution field contains non-finite values")
        if self.depths[0] == 0.0 and np.any(self.values[0, self.times > 0] != 0.0):
            raise ValidationError("drained top boundary must be exactly zero")


def time_factor(cv: float, t, h_dr: float = 1.0):
    """Dimensionless time factor Tv = cv * t / h_dr^2.

    Accepts a scalar or array ``t`` (years) and preserves its shape.
    """
    if cv <= 0:
        raise ValidationError(f"cv must be positive, got {cv}")
    if h_dr <= 0:
        raise ValidationError(f"h_dr must be positive, got {h_dr}")
    return cv * t / h_dr**2


def tv_to_time(cv: float, tv, h_dr: float = 1.0):
    """Invert the time factor: physical time t = Tv * h_dr^2 / cv."""
    if cv <= 0:
        raise ValidationError(f"cv must be positive, got {cv}")
    if h_dr <= 0:
        raise ValidationError(f"h_dr must be positive, got {h_dr}")
    return tv * h_dr**2 / cv


def analytical_solution(
    z: float,
    tv: float,
    u0_const: float,
    tol: float = SERIES_TOL,
    max_terms: int = SERIES_MAX_TERMS,
) -> float:
    """Series solution u(z, Tv) for a uniform initial pressure.

    Sums terms (2*u0/M) * sin(M*z) * exp(-M^2*Tv) with M = pi/2 * (2k+1)
    over k = 0, 1, ... and stops once the magnitude bound of the next
    term falls below ``tol * |u0_const|``.  ``z`` is the normalized depth
    in [0, 1].

    At Tv = 0 the series converges slowly near the drained boundary
    (Gibbs region); ConvergenceError is raised if ``max_terms`` is
    exhausted first.  Use Tv > 0 or a looser ``tol`` there.
    """
    if not 0.0 <= z <= 1.0:
        raise ValidationError(f"normalized depth must lie in [0, 1], got {z}")
    if tv < 0:
        raise ValidationError(f"time factor must be non-negative, got {tv}")
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")

    cutoff = tol * abs(u0_const)
    total = 0.0
    for k in range(max_terms):
        mk = 0.5 * math.pi * (2 * k + 1)
        decay = math.exp(-mk * mk * tv)
        total += (2.0 * u0_const / mk) * math.sin(mk * z) * decay
        m_next = mk + math.pi
        if (2.0 * abs(u0_const) / m_next) * math.exp(-m_next * m_next * tv) < cutoff:
            return total
    raise ConvergenceError(
        f"series did not converge within {max_terms} terms at z={z}, tv={tv}"
    )


def analytical_field(
    depths: np.ndarray,
    tvs: np.ndarray,
    u0_const: float,
    tol: float = SERIES_TOL,
    max_terms: int = SERIES_MAX_TERMS,
) -> np.ndarray:
    """Vectorized series evaluation on a (depths x tvs) grid.

    Same series and truncation rule as :func:`analytical_solution`, with
    the term bound taken at the smallest *positive* requested Tv (the
    slowest converging column).  Columns at Tv = 0, where the series
    converges only as 1/terms, are filled with its known limit, the
    initial condition: u0 for z > 0 and 0 at the drained boundary.
    Returns an array of shape (len(depths), len(tvs)).
    """
    depths = np.asarray(depths, dtype=float)
    tvs = np.asarray(tvs, dtype=float)
    if np.any(depths < 0) or np.any(depths > 1):
        raise ValidationError("normalized depths must lie in [0, 1]")
    if np.any(tvs < 0):
        raise ValidationError("time factors must be non-negative")
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")

    cutoff = tol * abs(u0_const)
    zero_cols = tvs == 0.0
    live = ~zero_cols
    out = np.zeros((depths.shape[0], tvs.shape[0]))
    out[:, zero_cols] = np.where(depths > 0, u0_const, 0.0)[:, None]
    if not np.any(live):
        return out
    tv_live = tvs[live]
    tv_min = float(tv_live.min())
    acc = np.zeros((depths.shape[0], tv_live.shape[0]))
    for k in range(max_terms):
        mk = 0.5 * math.pi * (2 * k + 1)
        acc += (2.0 * u0_const / mk) * np.outer(
            np.sin(mk * depths), np.exp(-mk * mk * tv_live)
        )
        m_next = mk + math.pi
        if (2.0 * abs(u0_const) / m_next) * math.exp(-m_next * m_next * tv_min) < cutoff:
            out[:, live] = acc
            return out
    raise ConvergenceError(
        f"series did not converge within {max_terms} terms at tv={tv_min}"
    )


def average_degree_of_consolidation(
    tv: float, tol: float = SERIES_TOL, max_terms: int = SERIES_MAX_TERMS
) -> float:
    """Average degree of consolidation U(Tv) = 1 - sum (2/M^2) exp(-M^2 Tv).

    Monotone non-decreasing in Tv, with U(0) = 0 and U -> 1.  At Tv = 0
    the sum equals 1 exactly (it is the basel-type series of the sine
    coefficients) but converges only as 1/terms, so that point returns
    its closed-form value directly.
    """
    if tv < 0:
        raise ValidationError(f"time factor must be non-negative, got {tv}")
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    if tv == 0.0:
        return 0.0
    remaining = 0.0
    for k in range(max_terms):
        mk = 0.5 * math.pi * (2 * k + 1)
        remaining += (2.0 / (mk * mk)) * math.exp(-mk * mk * tv)
        m_next = mk + math.pi
        if (2.0 / (m_next * m_next)) * math.exp(-m_next * m_next * tv) < tol:
            return 1.0 - remaining
    raise ConvergenceError(f"degree-of-consolidation series stalled at tv={tv}")


def build_system_matrix(nz: int, dz: float, cv: float) -> Tridiagonal:
    """Central-difference system matrix over the nz-1 unknown nodes.

    The grid has ``nz`` nodes; the drained top node is eliminated (its
    value is identically zero) and the impermeable bottom node folds its
    ghost neighbour back in, giving the last row (..., 1, -1).  All
    entries are scaled by cv/dz^2.  The result is symmetric and strictly
    negative definite.
    """
    if nz < 3:
        raise ValidationError(f"need at least 3 grid nodes, got {nz}")
    if dz <= 0:
        raise ValidationError(f"dz must be positive, got {dz}")
    if cv <= 0:
        raise ValidationError(f"cv must be positive, got {cv}")
    n = nz - 1
    scale = cv / dz**2
    diag = np.full(n, -2.0) * scale
    diag[-1] = -1.0 * scale
    off = np.full(n - 1, 1.0) * scale
    return Tridiagonal(lower=off.copy(), diag=diag, upper=off.copy())
