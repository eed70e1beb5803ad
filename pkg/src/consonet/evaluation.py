"""Grid evaluation, aggregate statistics, OOD sweeps, and benchmarking.

Per-case accuracy is measured on a dense uniformly spaced (z, Tv) grid
(Tv in [0, 2] mapped to physical time per case) against a fresh implicit
reference solve.  MSE is reported both in standardized units and in
Pa^2; the two are consistent by construction and checked as an
invariant.  Out-of-distribution flags always come from the training
ranges recorded in the model's own manifest.

Wall-clock benchmarking is strictly serial (one case at a time, warm-up
excluded, monotonic clock) and compares the full-field cost a user
pays: surrogate inference including standardization and destandardization
versus a complete solver run at data-generation tolerances.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .consolidation import ConsolidationCase, tv_to_time
from .dataset import OperatorDataset
from .errors import ValidationError
from .integrators import IntegratorConfig, bdf_solve, rk45_solve
from .models import ModelSpec, ModelState, query_grid
from .random_fields import GrfSpec, SamplingRanges, sample_case

DEFAULT_GRID = (100, 100)


@dataclass
class CaseRecord:
    """Accuracy of one case on the dense grid."""

    index: int
    cv: float
    mse_std: float
    mse_pa2: float
    max_abs_err_pa: float
    ood: bool | None
    predicted: np.ndarray | None = None
    reference: np.ndarray | None = None

    def row(self) -> dict:
        return {
            "index": self.index,
            "cv": self.cv,
            "mse_std": self.mse_std,
            "mse_pa2": self.mse_pa2,
            "max_abs_err_pa": self.max_abs_err_pa,
            "ood": self.ood,
        }


@dataclass
class EvalReport:
    """Per-case and aggregate MSE with the worst case singled out."""

    records: list
    mse_mean_std: float
    mse_sd_std: float
    mse_mean_pa2: float
    mse_sd_pa2: float
    worst_index: int
    worst: CaseRecord
    grid: tuple[int, int]
    config: dict = dc_field(default_factory=dict)

    def to_dict(self, include_fields: bool = True) -> dict:
        d = {
            "grid": list(self.grid),
            "mse_mean_std": self.mse_mean_std,
            "mse_sd_std": self.mse_sd_std,
            "mse_mean_pa2": self.mse_mean_pa2,
            "mse_sd_pa2": self.mse_sd_pa2,
            "worst_index": self.worst_index,
            "config": self.config,
            "cases": [r.row() for r in self.records],
        }
        if include_fields and self.worst.predicted is not None:
            d["worst_case"] = {
                **self.worst.row(),
                "predicted": self.worst.predicted.tolist(),
                "reference": self.worst.reference.tolist(),
            }
        return d


@dataclass
class TimingRecord:
    """Serial wall-clock timings for one method over n cases."""

    label: str
    seconds: np.ndarray
    mean: float
    sd: float

    @staticmethod
    def from_times(label: str, seconds) -> "TimingRecord":
        seconds = np.asarray(seconds, dtype=float)
        return TimingRecord(label, seconds, float(seconds.mean()), float(seconds.std()))

    def row(self) -> dict:
        return {"method": self.label, "mean_s": self.mean, "sd_s": self.sd,
                "n": int(self.seconds.shape[0])}


def training_cv_range(state: ModelState) -> tuple[float, float] | None:
    """Training cv range from the model manifest (never from CLI input)."""
    ranges = (state.train_config or {}).get("train_meta", {}).get("ranges") or {}
    rng = ranges.get("cv_range")
    return (float(rng[0]), float(rng[1])) if rng else None


def evaluate_on_grid(
    state: ModelState | None,
    spec: ModelSpec | None,
    case: ConsolidationCase,
    grid_nz: int = 100,
    grid_nt: int = 100,
    solver_cfg: IntegratorConfig | None = None,
    keep_fields: bool = False,
    index: int = 0,
    predictor=None,
) -> CaseRecord:
    """Compare a surrogate against a fresh implicit solve on a dense grid.

    ``predictor`` overrides the model: a callable (case, depths, times)
    -> field, used by self-consistency tests.
    """
    solver_cfg = solver_cfg or IntegratorConfig()
    tvs = np.linspace(0.0, 2.0, grid_nt)
    t_eval = tv_to_time(case.cv, tvs, case.h_dr)
    ref = bdf_solve(case, grid_nz, t_eval, solver_cfg)
    if predictor is not None:
        pred = np.asarray(predictor(case, ref.depths, ref.times), dtype=float)
        tstats = state.stats if state is not None else None
    else:
        if state is None or spec is None:
            raise ValidationError("either a model or a predictor is required")
        pred = query_grid(state, spec, case.u0, case.cv, ref.depths, ref.times)
        tstats = state.stats
    if pred.shape != ref.values.shape:
        raise ValidationError(f"predicted field shape {pred.shape} does not match grid")

    err = pred - ref.values
    mse_pa2 = float(np.mean(err * err))
    if tstats is not None:
        r_std = tstats.norm_target(pred) - tstats.norm_target(ref.values)
        mse_std = float(np.mean(r_std * r_std))
    else:
        mse_std = float("nan")
    cv_rng = training_cv_range(state) if state is not None else None
    ood = None if cv_rng is None else not (cv_rng[0] <= case.cv <= cv_rng[1])
    return CaseRecord(
        index=index,
        cv=case.cv,
        mse_std=mse_std,
        mse_pa2=mse_pa2,
        max_abs_err_pa=float(np.max(np.abs(err))),
        ood=ood,
        predicted=pred if keep_fields else None,
        reference=ref.values if keep_fields else None,
    )


def aggregate(
    cases: list,
    state: ModelState,
    spec: ModelSpec,
    grid: tuple[int, int] = DEFAULT_GRID,
    solver_cfg: IntegratorConfig | None = None,
    config_echo: dict | None = None,
) -> EvalReport:
    """Mean and spread of per-case dense-grid MSE, worst case extracted."""
    if not cases:
        raise ValidationError("empty case set")
    records = [
        evaluate_on_grid(state, spec, case, grid[0], grid[1], solver_cfg, index=i)
        for i, case in enumerate(cases)
    ]
    mse_std = np.array([r.mse_std for r in records])
    mse_pa2 = np.array([r.mse_pa2 for r in records])
    worst_idx = int(np.argmax(mse_pa2))
    worst = evaluate_on_grid(
        state, spec, cases[worst_idx], grid[0], grid[1], solver_cfg,
        keep_fields=True, index=worst_idx,
    )
    return EvalReport(
        records=records,
        mse_mean_std=float(mse_std.mean()),
        mse_sd_std=float(mse_std.std()),
        mse_mean_pa2=float(mse_pa2.mean()),
        mse_sd_pa2=float(mse_pa2.std()),
        worst_index=worst_idx,
        worst=worst,
        grid=grid,
        config=config_echo or {},
    )


def dataset_cases(ds: OperatorDataset) -> list:
    """Rebuild the ConsolidationCase list from a stored dataset."""
    depths = np.linspace(0.0, 1.0, ds.m)
    return [
        ConsolidationCase(cv=float(ds.cv_values[i]), h_dr=1.0,
                          u0=ds.branch_inputs[i], sensor_depths=depths)
        for i in range(ds.n)
    ]


def sample_fresh_cases(
    n: int,
    seed: int,
    ranges: SamplingRanges | None = None,
    grf_spec: GrfSpec | None = None,
    mix: float = 0.5,
    m: int = 100,
) -> list:
    """Sample n cases with the dataset pipeline's kind/seed scheme."""
    ranges = ranges or SamplingRanges()
    grf_spec = grf_spec or GrfSpec()
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n + 1)
    kind_rng = np.random.default_rng(children[0])
    kinds = np.where(kind_rng.random(n) < mix, "grf", "uniform")
    return [
        sample_case(ranges, str(kinds[i]), grf_spec, np.random.default_rng(children[i + 1]),
                    n_sensors=m)
        for i in range(n)
    ]


def sweep_cv(
    state: ModelState,
    spec: ModelSpec,
    cv_values,
    cases_per: int,
    seed: int,
    grid: tuple[int, int] = DEFAULT_GRID,
    solver_cfg: IntegratorConfig | None = None,
    mix: float = 0.5,
    grf_spec: GrfSpec | None = None,
) -> list[dict]:
    """Mean MSE per cv value with in/out-of-distribution flags.

    Cases at each cv reuse the training-style profile sampling with the
    cv range collapsed onto the sweep value.
    """
    cv_values = [float(c) for c in cv_values]
    rows = []
    cv_rng = training_cv_range(state)
    for j, cv in enumerate(cv_values):
        ranges = SamplingRanges(cv_range=(cv, cv))
        cases = sample_fresh_cases(cases_per, seed + 1000 * j, ranges, grf_spec,
                                   mix, spec.m_sensors)
        recs = [
            evaluate_on_grid(state, spec, case, grid[0], grid[1], solver_cfg, index=i)
            for i, case in enumerate(cases)
        ]
        pa2 = np.array([r.mse_pa2 for r in recs])
        rows.append({
            "cv": cv,
            "mse_mean_pa2": float(pa2.mean()),
            "mse_sd_pa2": float(pa2.std()),
            "mse_mean_std": float(np.mean([r.mse_std for r in recs])),
            "n_cases": cases_per,
            "ood": None if cv_rng is None else not (cv_rng[0] <= cv <= cv_rng[1]),
        })
    return rows


def sweep_length_scale(
    state: ModelState,
    spec: ModelSpec,
    l_values,
    realizations: int,
    seed: int,
    grid: tuple[int, int] = DEFAULT_GRID,
    solver_cfg: IntegratorConfig | None = None,
) -> list[dict]:
    """Mean +- sd MSE over fresh GRF cases per correlation length.

    cv is drawn from the model's recorded training range so the sweep
    isolates the function-space shift.
    """
    cv_rng = training_cv_range(state) or (0.3, 1.0)
    rows = []
    for j, l in enumerate(l_values):
        ranges = SamplingRanges(cv_range=cv_rng)
        grf = GrfSpec(length_scale=float(l))
        cases = sample_fresh_cases(realizations, seed + 1000 * j, ranges, grf,
                                   mix=1.0, m=spec.m_sensors)
        recs = [
            evaluate_on_grid(state, spec, case, grid[0], grid[1], solver_cfg, index=i)
            for i, case in enumerate(cases)
        ]
        pa2 = np.array([r.mse_pa2 for r in recs])
        rows.append({
            "length_scale": float(l),
            "mse_mean_pa2": float(pa2.mean()),
            "mse_sd_pa2": float(pa2.std()),
            "n_cases": realizations,
        })
    return rows


def benchmark(
    models: list[tuple[str, ModelState, ModelSpec]],
    solvers: list[tuple[str, str, IntegratorConfig]],
    n_cases: int,
    seed: int,
    grid: tuple[int, int] = DEFAULT_GRID,
    ranges: SamplingRanges | None = None,
    grf_spec: GrfSpec | None = None,
    mix: float = 0.5,
) -> list[TimingRecord]:
    """Wall-clock per full-field solve, serial per method, warm-up excluded.

    ``solvers`` entries are (label, kind, cfg) with kind "bdf" or "rk45";
    solver timings use the same tolerances as data generation.
    """
    if n_cases < 30:
        raise ValidationError(f"need at least 30 cases for timing aggregates, got {n_cases}")
    m = models[0][2].m_sensors if models else 100
    cases = sample_fresh_cases(n_cases, seed, ranges, grf_spec, mix, m)
    nz, nt = grid
    tvs = np.linspace(0.0, 2.0, nt)
    depths = np.linspace(0.0, 1.0, nz)
    records = []

    for label, state, spec in models:
        query_grid(state, spec, cases[0].u0, cases[0].cv, depths,
                   tv_to_time(cases[0].cv, tvs))  # warm-up
        times = []
        for case in cases:
            t_eval = tv_to_time(case.cv, tvs, case.h_dr)
            t0 = time.perf_counter()
            query_grid(state, spec, case.u0, case.cv, depths, t_eval)
            times.append(time.perf_counter() - t0)
        records.append(TimingRecord.from_times(label, times))

    for label, kind, cfg in solvers:
        solve = rk45_solve if kind == "rk45" else bdf_solve
        solve(cases[0], nz, tv_to_time(cases[0].cv, tvs, cases[0].h_dr), cfg)  # warm-up
        times = []
        for case in cases:
            t_eval = tv_to_time(case.cv, tvs, case.h_dr)
            t0 = time.perf_counter()
            solve(case, nz, t_eval, cfg)
            times.append(time.perf_counter() - t0)
        records.append(TimingRecord.from_times(label, times))
    return records


# -- report emission (JSON plus flat CSV) ----------------------------------

def write_json_csv(payload: dict, rows: list[dict], json_path) -> None:
    """Write a JSON report and its flat CSV twin next to it."""
    json_path = Path(json_path)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if rows:
        csv_path = json_path.with_suffix(".csv")
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
