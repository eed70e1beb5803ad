"""Operator-learning dataset generation, standardization, and storage.

A dataset holds N input functions (initial pressure profiles sampled at
m sensors, plus the consolidation coefficient) and, for each, P scattered
evaluation points with the solver's pressure there.  Evaluation points
are drawn uniformly over the normalized (z, Tv) rectangle [0,1] x [0,2]
and converted to physical (z, t) per case, which equalizes temporal
coverage across consolidation coefficients; the trunk consumes physical
coordinates.

Reproducibility scheme: the master seed feeds a SeedSequence that spawns
n+1 children.  Child 0 drives the per-case profile-kind choice
(Bernoulli(mix) in case order); child i+1 drives everything for case i,
in the order: cv, mean (or uniform level), field noise (GRF only), then
the P (z, Tv) pairs.  Results are therefore identical no matter how many
worker processes solve the cases.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .consolidation import SolutionField, tv_to_time
from .errors import NumericalError, StorageError, ValidationError
from .integrators import IntegratorConfig, bdf_solve
from .random_fields import GENERATOR_NAME, GrfSpec, SamplingRanges, sample_case
from .storage import (
    SCHEMA_VERSION,
    ensure_dir,
    load_manifest,
    read_array,
    save_manifest,
    write_array,
)

DATASET_FORMAT = "consonet/dataset"
TV_MAX = 2.0

_FILES = ("branch_inputs.bin", "cv.bin", "eval_points.bin", "targets.bin")


@dataclass(frozen=True)
class StandardizationStats:
    """Component-wise means and standard deviations from a training set.

    Branch inputs are standardized per sensor, coordinates per component
    (z, t), cv and targets with scalars.  All stds must be positive.
    """

    branch_mean: np.ndarray
    branch_std: np.ndarray
    cv_mean: float
    cv_std: float
    coord_mean: np.ndarray
    coord_std: np.ndarray
    target_mean: float
    target_std: float

    def __post_init__(self):
        object.__setattr__(self, "branch_mean", np.asarray(self.branch_mean, dtype=float))
        object.__setattr__(self, "branch_std", np.asarray(self.branch_std, dtype=float))
        object.__setattr__(self, "coord_mean", np.asarray(self.coord_mean, dtype=float))
        object.__setattr__(self, "coord_std", np.asarray(self.coord_std, dtype=float))
        if self.coord_mean.shape != (2,) or self.coord_std.shape != (2,):
            raise ValidationError("coordinate stats must have 2 components (z, t)")
        if self.branch_mean.shape != self.branch_std.shape or self.branch_mean.ndim != 1:
            raise ValidationError("branch stats must be 1-D arrays of equal length")
        stds = np.concatenate([self.branch_std, self.coord_std,
                               [self.cv_std, self.target_std]])
        if np.any(stds <= 0):
            raise ValidationError("all standard deviations must be positive "
                                  "(degenerate training set?)")

    @staticmethod
    def from_dataset(ds: "OperatorDataset") -> "StandardizationStats":
        pts = ds.eval_points.reshape(-1, 2)
        return StandardizationStats(
            branch_mean=ds.branch_inputs.mean(axis=0),
            branch_std=ds.branch_inputs.std(axis=0),
            cv_mean=float(ds.cv_values.mean()),
            cv_std=float(ds.cv_values.std()),
            coord_mean=pts.mean(axis=0),
            coord_std=pts.std(axis=0),
            target_mean=float(ds.targets.mean()),
            target_std=float(ds.targets.std()),
        )

    # -- elementwise transforms used by training and inference ---------
    def norm_branch(self, u):
        return (u - self.branch_mean) / self.branch_std

    def norm_cv(self, cv):
        return (cv - self.cv_mean) / self.cv_std

    def norm_coords(self, pts):
        return (pts - self.coord_mean) / self.coord_std

    def norm_target(self, y):
        return (y - self.target_mean) / self.target_std

    def denorm_target(self, y):
        return y * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {
            "branch_mean": self.branch_mean.tolist(),
            "branch_std": self.branch_std.tolist(),
            "cv_mean": self.cv_mean,
            "cv_std": self.cv_std,
            "coord_mean": self.coord_mean.tolist(),
            "coord_std": self.coord_std.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }

    @staticmethod
    def from_dict(d: dict) -> "StandardizationStats":
        return StandardizationStats(
            branch_mean=np.array(d["branch_mean"]),
            branch_std=np.array(d["branch_std"]),
            cv_mean=d["cv_mean"],
            cv_std=d["cv_std"],
            coord_mean=np.array(d["coord_mean"]),
            coord_std=np.array(d["coord_std"]),
            target_mean=d["target_mean"],
            target_std=d["target_std"],
        )


@dataclass
class OperatorDataset:
    """N input functions x P evaluation points with solver targets."""

    branch_inputs: np.ndarray  # (n, m) Pa
    cv_values: np.ndarray      # (n,) m^2/year
    eval_points: np.ndarray    # (n, p, 2) physical (z, t)
    targets: np.ndarray        # (n, p) Pa
    stats: StandardizationStats | None = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.branch_inputs = np.asarray(self.branch_inputs, dtype=float)
        self.cv_values = np.asarray(self.cv_values, dtype=float)
        self.eval_points = np.asarray(self.eval_points, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        n, m = self.branch_inputs.shape
        if self.cv_values.shape != (n,):
            raise ValidationError("cv_values length inconsistent with branch_inputs")
        if self.eval_points.ndim != 3 or self.eval_points.shape[0] != n \
                or self.eval_points.shape[2] != 2:
            raise ValidationError("eval_points must have shape (n, p, 2)")
        p = self.eval_points.shape[1]
        if self.targets.shape != (n, p):
            raise ValidationError("targets shape inconsistent with eval_points")
        if not (np.all(np.isfinite(self.targets)) and np.all(np.isfinite(self.branch_inputs))):
            raise ValidationError("dataset contains non-finite entries")
        z = self.eval_points[:, :, 0]
        if np.any(z < 0) or np.any(z > 1):
            raise ValidationError("evaluation depths must lie in [0, 1]")
        tv = self.eval_points[:, :, 1] * self.cv_values[:, None]  # h_dr = 1
        if np.any(tv < 0) or np.any(tv > TV_MAX * (1 + 1e-12)):
            raise ValidationError(f"evaluation time factors must lie in [0, {TV_MAX}]")

    @property
    def n(self) -> int:
        return self.branch_inputs.shape[0]

    @property
    def m(self) -> int:
        return self.branch_inputs.shape[1]

    @property
    def p(self) -> int:
        return self.eval_points.shape[1]


@dataclass(frozen=True)
class StandardizedViews:
    """Dataset arrays mapped into standardized units."""

    branch: np.ndarray
    cv: np.ndarray
    points: np.ndarray
    targets: np.ndarray


def standardize(ds: OperatorDataset, stats: StandardizationStats) -> StandardizedViews:
    return StandardizedViews(
        branch=stats.norm_branch(ds.branch_inputs),
        cv=stats.norm_cv(ds.cv_values),
        points=stats.norm_coords(ds.eval_points),
        targets=stats.norm_target(ds.targets),
    )


def destandardize(values, stats: StandardizationStats):
    """Map standardized target values back to Pa (exact inverse)."""
    return stats.denorm_target(np.asarray(values))


def bilinear_field_values(field: SolutionField, zq, tq) -> np.ndarray:
    """Bilinear interpolation of a solved field at scattered (z, t) points."""
    zq = np.asarray(zq, dtype=float)
    tq = np.asarray(tq, dtype=float)
    zs, ts = field.depths, field.times
    iz = np.clip(np.searchsorted(zs, zq, side="right") - 1, 0, len(zs) - 2)
    it = np.clip(np.searchsorted(ts, tq, side="right") - 1, 0, len(ts) - 2)
    wz = (zq - zs[iz]) / (zs[iz + 1] - zs[iz])
    wt = (tq - ts[it]) / (ts[it + 1] - ts[it])
    v = field.values
    return (
        v[iz, it] * (1 - wz) * (1 - wt)
        + v[iz + 1, it] * wz * (1 - wt)
        + v[iz, it + 1] * (1 - wz) * wt
        + v[iz + 1, it + 1] * wz * wt
    )


def _solve_one_case(args):
    (i, child_state, kind, ranges, grf_spec, m, p, nz, nt, cfg_dict) = args
    rng = np.random.default_rng(np.random.SeedSequence(**child_state))
    case = sample_case(ranges, kind, grf_spec, rng, n_sensors=m)
    t_end = tv_to_time(case.cv, TV_MAX, case.h_dr)
    cfg = IntegratorConfig.from_dict(cfg_dict)
    try:
        field = bdf_solve(case, nz, np.linspace(0.0, t_end, nt), cfg)
    except NumericalError as exc:
        raise NumericalError(f"solver failed for case {i} (kind={kind}): {exc}") from exc
    pts_norm = rng.uniform(0.0, 1.0, size=(p, 2))
    z = pts_norm[:, 0]
    tv = TV_MAX * pts_norm[:, 1]
    t = tv_to_time(case.cv, tv, case.h_dr)
    targets = bilinear_field_values(field, z, t)
    return i, case.u0, case.cv, np.stack([z, t], axis=1), targets


def _seed_state(ss: np.random.SeedSequence) -> dict:
    return {"entropy": ss.entropy, "spawn_key": ss.spawn_key}


def generate_dataset(
    n: int,
    m: int,
    p: int,
    ranges: SamplingRanges,
    grf_spec: GrfSpec,
    mix: float,
    solver_cfg: IntegratorConfig,
    seed: int,
    nz: int = 100,
    nt: int = 200,
    role: str = "train",
    workers: int = 1,
) -> OperatorDataset:
    """Sample n cases, solve each, and read P scattered targets per case.

    ``mix`` is the fraction of GRF (vs uniform) initial profiles;
    standardization statistics are computed from the dataset's own
    entries only when ``role == "train"``.
    """
    if n < 1 or m < 2 or p < 1:
        raise ValidationError("need n >= 1, m >= 2, p >= 1")
    if not 0.0 <= mix <= 1.0:
        raise ValidationError(f"mix must lie in [0, 1], got {mix}")
    if role not in ("train", "val", "test"):
        raise ValidationError(f"role must be train/val/test, got {role!r}")

    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n + 1)
    kind_rng = np.random.default_rng(children[0])
    kinds = np.where(kind_rng.random(n) < mix, "grf", "uniform")

    jobs = [
        (i, _seed_state(children[i + 1]), str(kinds[i]), ranges, grf_spec,
         m, p, nz, nt, solver_cfg.to_dict())
        for i in range(n)
    ]
    branch = np.empty((n, m))
    cvs = np.empty(n)
    points = np.empty((n, p, 2))
    targets = np.empty((n, p))
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_solve_one_case, jobs, chunksize=16)
            for i, u0, cv, pts, tgt in results:
                branch[i], cvs[i], points[i], targets[i] = u0, cv, pts, tgt
    else:
        for job in jobs:
            i, u0, cv, pts, tgt = _solve_one_case(job)
            branch[i], cvs[i], points[i], targets[i] = u0, cv, pts, tgt
    gen_seconds = time.perf_counter() - t0

    meta = {
        "role": role,
        "seed": int(seed),
        "generator": GENERATOR_NAME,
        "seed_scheme": "seedsequence-spawn(n+1): child 0 kind stream, child i+1 case i "
                       "(cv, mean, field, then p x (z, tv) pairs)",
        "mix": mix,
        "n_grf": int(np.sum(kinds == "grf")),
        "nz": nz,
        "nt": nt,
        "solver_config": solver_cfg.to_dict(),
        "ranges": ranges.to_dict(),
        "grf": grf_spec.to_dict(),
        "gen_seconds": gen_seconds,
    }
    ds = OperatorDataset(
        branch_inputs=branch, cv_values=cvs, eval_points=points, targets=targets,
        stats=None, meta=meta,
    )
    if role == "train":
        ds.stats = StandardizationStats.from_dataset(ds)
    return ds


def save_dataset(ds: OperatorDataset, path, dtype_tag: str = "f64le") -> None:
    """Write the manifest + raw binary container; round-trips bit-exact."""
    dirpath = ensure_dir(path)
    files = {
        "branch_inputs.bin": write_array(dirpath, "branch_inputs.bin", ds.branch_inputs, dtype_tag),
        "cv.bin": write_array(dirpath, "cv.bin", ds.cv_values, dtype_tag),
        "eval_points.bin": write_array(dirpath, "eval_points.bin", ds.eval_points, dtype_tag),
        "targets.bin": write_array(dirpath, "targets.bin", ds.targets, dtype_tag),
    }
    manifest = {
        "format": DATASET_FORMAT,
        "schema_version": SCHEMA_VERSION,
        "counts": {"n": ds.n, "m": ds.m, "p": ds.p},
        "dtype": dtype_tag,
        "files": files,
        "standardization": ds.stats.to_dict() if ds.stats is not None else None,
        "meta": {**ds.meta, "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())},
    }
    save_manifest(dirpath, manifest)


def load_dataset(path) -> OperatorDataset:
    dirpath = Path(path)
    manifest = load_manifest(dirpath, DATASET_FORMAT)
    counts = manifest["counts"]
    n, m, p = counts["n"], counts["m"], counts["p"]
    tag = manifest["dtype"]
    files = manifest["files"]
    for name in _FILES:
        if name not in files:
            raise StorageError(f"manifest is missing the entry for {name}")
    ds = OperatorDataset(
        branch_inputs=read_array(dirpath, "branch_inputs.bin", files["branch_inputs.bin"], tag, (n, m)),
        cv_values=read_array(dirpath, "cv.bin", files["cv.bin"], tag, (n,)),
        eval_points=read_array(dirpath, "eval_points.bin", files["eval_points.bin"], tag, (n, p, 2)),
        targets=read_array(dirpath, "targets.bin", files["targets.bin"], tag, (n, p)),
        stats=(StandardizationStats.from_dict(manifest["standardization"])
               if manifest.get("standardization") else None),
        meta=manifest.get("meta", {}),
    )
    return ds
