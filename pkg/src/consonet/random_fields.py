"""Seeded sampling of initial pressure profiles and material parameters.

Initial excess pore pressure profiles are either uniform constants or
realizations of a Gaussian random field with the squared-exponential
kernel sigma^2 * exp(-|z1 - z2|^2 / l^2).  Note the plain l^2 in the
denominator (no factor 2); external GRF tooling often uses 2*l^2.

All draws go through numpy's PCG64 generator.  Everything is a pure
function of (seed, arguments), which is what makes dataset generation
reproducible and embarrassingly parallel over seed ranges.  Realizations
are deliberately not clipped at zero: with the default variance the
field excursions can be negative, and clipping would change the sampled
function space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .consolidation import ConsolidationCase
from .errors import NumericalError, ValidationError

GENERATOR_NAME = "numpy-pcg64"

#: Relative diagonal jitter applied before Cholesky factorization.
DEFAULT_JITTER_FRACTION = 1e-8
_JITTER_RETRIES = 3


@dataclass(frozen=True)
class GrfSpec:
    """Gaussian random field parameters (pressures in Pa).

    ``jitter`` is added to the covariance diagonal to make the
    numerically rank-deficient Gaussian kernel factorizable; it defaults
    to 1e-8 * variance.
    """

    mean: float = 15e3
    variance: float = 1e9
    length_scale: float = 0.5
    jitter: float | None = None

    def __post_init__(self):
        if self.variance <= 0:
            raise ValidationError(f"variance must be positive, got {self.variance}")
        if self.length_scale <= 0:
            raise ValidationError(f"length_scale must be positive, got {self.length_scale}")
        if self.jitter is not None and self.jitter < 0:
            raise ValidationError(f"jitter must be non-negative, got {self.jitter}")

    @property
    def effective_jitter(self) -> float:
        if self.jitter is None:
            return DEFAULT_JITTER_FRACTION * self.variance
        return self.jitter

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "length_scale": self.length_scale,
            "jitter": self.jitter,
        }

    @staticmethod
    def from_dict(d: dict) -> "GrfSpec":
        return GrfSpec(**d)


@dataclass(frozen=True)
class SamplingRanges:
    """Uniform sampling ranges for case generation (Pa and m^2/year)."""

    u0_uniform_range: tuple[float, float] = (10e3, 20e3)
    mean_range: tuple[float, float] = (10e3, 20e3)
    cv_range: tuple[float, float] = (0.3, 1.0)

    def __post_init__(self):
        for name in ("u0_uniform_range", "mean_range", "cv_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"{name} low {lo} exceeds high {hi}")
        if self.cv_range[0] <= 0:
            raise ValidationError("cv_range must be positive")

    def to_dict(self) -> dict:
        return {
            "u0_uniform_range": list(self.u0_uniform_range),
            "mean_range": list(self.mean_range),
            "cv_range": list(self.cv_range),
        }

    @staticmethod
    def from_dict(d: dict) -> "SamplingRanges":
        return SamplingRanges(
            u0_uniform_range=tuple(d["u0_uniform_range"]),
            mean_range=tuple(d["mean_range"]),
            cv_range=tuple(d["cv_range"]),
        )


def _rng(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or a ready Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def covariance_matrix(depths: np.ndarray, spec: GrfSpec) -> np.ndarray:
    """Kernel matrix C[i,j] = variance * exp(-(zi-zj)^2 / l^2) + jitter on i==j."""
    depths = np.asarray(depths, dtype=float)
    if np.any(depths < 0) or np.any(depths > 1):
        raise ValidationError("depths must lie in [0, 1]")
    d2 = (depths[:, None] - depths[None, :]) ** 2
    cov = spec.variance * np.exp(-d2 / spec.length_scale**2)
    cov[np.diag_indices_from(cov)] += spec.effective_jitter
    return cov


def sample_grf(depths: np.ndarray, spec: GrfSpec, seed) -> np.ndarray:
    """Draw one field realization: mean + L @ xi with L the Cholesky factor.

    If factorization fails, the diagonal jitter is escalated by 10x up
    to three times before giving up.
    """
    rng = _rng(seed)
    depths = np.asarray(depths, dtype=float)
    jitter = spec.effective_jitter
    cov = covariance_matrix(depths, spec)
    base_diag = np.diag_indices_from(cov)
    chol = None
    for attempt in range(_JITTER_RETRIES + 1):
        try:
            chol = np.linalg.cholesky(cov)
            break
        except np.linalg.LinAlgError:
            if attempt == _JITTER_RETRIES:
                raise NumericalError(
                    f"covariance not factorizable after jitter escalation to {jitter:.3g}"
                )
            if jitter == 0.0:
                jitter = DEFAULT_JITTER_FRACTION * spec.variance
                cov[base_diag] += jitter
            else:
                cov[base_diag] += 9.0 * jitter  # total jitter becomes 10x previous
                jitter *= 10.0
    xi = rng.standard_normal(depths.shape[0])
    return spec.mean + chol @ xi


def sample_case(
    ranges: SamplingRanges,
    profile_kind: str,
    grf_spec: GrfSpec | None,
    seed,
    n_sensors: int = 100,
    h_dr: float = 1.0,
) -> ConsolidationCase:
    """Draw one consolidation case from a single seeded stream.

    Draw order (fixed, part of the reproducibility contract):
    cv first, then the mean (the constant value for ``uniform``, the
    field mean for ``grf``), then the field noise vector (grf only).
    """
    if profile_kind not in ("uniform", "grf"):
        raise ValidationError(f"profile_kind must be 'uniform' or 'grf', got {profile_kind!r}")
    rng = _rng(seed)
    depths = np.linspace(0.0, 1.0, n_sensors)
    cv = rng.uniform(*ranges.cv_range)
    if profile_kind == "uniform":
        u0 = np.full(n_sensors, rng.uniform(*ranges.u0_uniform_range))
    else:
        if grf_spec is None:
            grf_spec = GrfSpec()
        mean = rng.uniform(*ranges.mean_range)
        spec = GrfSpec(
            mean=mean,
            variance=grf_spec.variance,
            length_scale=grf_spec.length_scale,
            jitter=grf_spec.jitter,
        )
        u0 = sample_grf(depths, spec, rng)
    return ConsolidationCase(cv=cv, h_dr=h_dr, u0=u0, sensor_depths=depths)
