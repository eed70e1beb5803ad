"""Command-line interface.

Subcommands: gen-data, train, eval, bench, sweep, solve.  Every flag can
also be supplied through a JSON config file (--config FILE) whose keys
are the flag destinations (dashes become underscores); explicit flags
win over the file.  Exit codes: 0 success, 2 validation error,
3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .consolidation import analytical_field, tv_to_time, uniform_case
from .dataset import generate_dataset, load_dataset, save_dataset
from .errors import NumericalError, StorageError, ValidationError
from .evaluation import (
    aggregate,
    benchmark,
    dataset_cases,
    sample_fresh_cases,
    sweep_cv,
    sweep_length_scale,
    write_json_csv,
)
from .integrators import IntegratorConfig, solve_field
from .models import (
    ModelSpec,
    TrainConfig,
    load_model,
    save_model,
    train,
    variant_from_number,
)
from .random_fields import GrfSpec, SamplingRanges, sample_case


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except Exception as exc:
        raise ValidationError(f"expected LO:HI range, got {text!r}") from exc


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        nz, nt = text.lower().split("x")
        return int(nz), int(nt)
    except Exception as exc:
        raise ValidationError(f"expected NZxNT grid, got {text!r}") from exc


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except Exception as exc:
        raise ValidationError(f"expected comma-separated floats, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consonet",
        description="Consolidation surrogate toolkit: reference solvers, "
                    "operator-network training, and evaluation.",
    )
    parser.add_argument("--config", help="JSON file with default values for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an operator-learning dataset")
    g.add_argument("--n", type=int, required=True, help="number of input functions")
    g.add_argument("--m", type=int, default=100, help="sensor count per profile")
    g.add_argument("--p", type=int, default=100, help="evaluation points per function")
    g.add_argument("--mix", type=float, default=0.5, help="fraction of GRF profiles")
    g.add_argument("--cv-range", default="0.3:1.0")
    g.add_argument("--u0-range", default="10e3:20e3", help="uniform profile range, Pa")
    g.add_argument("--mean-range", default=None, help="GRF mean range, Pa (default: u0 range)")
    g.add_argument("--grf-sigma2", type=float, default=1e9, help="GRF variance, Pa^2")
    g.add_argument("--grf-length", type=float, default=0.5)
    g.add_argument("--nz", type=int, default=100)
    g.add_argument("--nt", type=int, default=200, help="stored time slices per solve")
    g.add_argument("--rtol", type=float, default=1e-6)
    g.add_argument("--atol", type=float, default=1e-9)
    g.add_argument("--role", choices=("train", "val", "test"), default="train")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train one operator-network variant")
    t.add_argument("--model", type=int, required=True, choices=(1, 2, 3, 4))
    t.add_argument("--data", required=True, help="training dataset directory")
    t.add_argument("--val", default=None, help="validation dataset directory")
    t.add_argument("--epochs", type=int, default=600)
    t.add_argument("--batch", type=int, default=4096)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--q", type=int, default=50)
    t.add_argument("--width", type=int, default=30)
    t.add_argument("--depth", type=int, default=6)
    t.add_argument("--ffe-m", type=int, default=50)
    t.add_argument("--ffe-sigma", type=float, default=1.0)
    t.add_argument("--log-every", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("eval", help="dense-grid evaluation against the reference solver")
    e.add_argument("--model", required=True, help="model directory")
    e.add_argument("--cases", default=None, help="dataset directory providing cases")
    e.add_argument("--n-fresh", type=int, default=None, help="sample K fresh cases instead")
    e.add_argument("--grid", default="100x100")
    e.add_argument("--report", required=True)
    e.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bench", help="wall-clock comparison of surrogates and solvers")
    b.add_argument("--models", default="", help="comma-separated model directories")
    b.add_argument("--solvers", default="bdf,rk45")
    b.add_argument("--cases", type=int, default=500)
    b.add_argument("--grid", default="100x100")
    b.add_argument("--report", required=True)
    b.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sweep", help="out-of-distribution parameter sweeps")
    s.add_argument("--model", required=True)
    s.add_argument("--param", required=True, choices=("cv", "length-scale"))
    s.add_argument("--range", default=None, help="LO:HI, used with --steps")
    s.add_argument("--steps", type=int, default=15)
    s.add_argument("--values", default=None, help="explicit comma-separated values")
    s.add_argument("--cases-per", type=int, default=10)
    s.add_argument("--grid", default="100x100")
    s.add_argument("--report", required=True)
    s.add_argument("--seed", type=int, default=0)

    v = sub.add_parser("solve", help="solve one case and dump the field as CSV")
    v.add_argument("--cv", type=float, required=True)
    v.add_argument("--profile", default="uniform:15e3",
                   help="'uniform:<Pa>' or 'grf' (seeded GRF realization)")
    v.add_argument("--method", choices=("bdf", "rk45", "analytic"), default="bdf")
    v.add_argument("--grid", default="100x100")
    v.add_argument("--grf-sigma2", type=float, default=1e9)
    v.add_argument("--grf-length", type=float, default=0.5)
    v.add_argument("--rtol", type=float, default=1e-6)
    v.add_argument("--atol", type=float, default=1e-9)
    v.add_argument("--out", required=True)
    v.add_argument("--seed", type=int, default=0)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    if "--config" not in argv:
        return
    path = argv[argv.index("--config") + 1]
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise StorageError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in dests})


def _cmd_gen_data(args) -> int:
    u0_range = _parse_range(args.u0_range)
    ranges = SamplingRanges(
        u0_uniform_range=u0_range,
        mean_range=_parse_range(args.mean_range) if args.mean_range else u0_range,
        cv_range=_parse_range(args.cv_range),
    )
    grf = GrfSpec(variance=args.grf_sigma2, length_scale=args.grf_length)
    cfg = IntegratorConfig(rtol=args.rtol, atol=args.atol)
    ds = generate_dataset(
        args.n, args.m, args.p, ranges, grf, args.mix, cfg, args.seed,
        nz=args.nz, nt=args.nt, role=args.role, workers=args.workers,
    )
    save_dataset(ds, args.out)
    print(f"wrote {ds.n} x {ds.p} triples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    ds = load_dataset(args.data)
    val = load_dataset(args.val) if args.val else None
    spec = ModelSpec(
        variant=variant_from_number(args.model),
        m_sensors=ds.m,
        q=args.q,
        hidden_width=args.width,
        hidden_depth=args.depth,
        ffe_m=args.ffe_m,
        ffe_sigma=args.ffe_sigma,
    )
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr)
    state = train(spec, ds, val, cfg, args.seed, log_every=args.log_every)
    save_model(state, spec, args.out)
    last = state.history["train_loss"][-1] if state.history["train_loss"] else float("nan")
    print(f"model {args.model} trained {args.epochs} epochs "
          f"(final train loss {last:.4e}) -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    spec, state = load_model(args.model)
    if (args.cases is None) == (args.n_fresh is None):
        raise ValidationError("provide exactly one of --cases or --n-fresh")
    if args.cases:
        cases = dataset_cases(load_dataset(args.cases))
    else:
        cases = sample_fresh_cases(args.n_fresh, args.seed, m=spec.m_sensors)
    grid = _parse_grid(args.grid)
    report = aggregate(cases, state, spec, grid,
                       config_echo={"model": args.model, "grid": args.grid,
                                    "n_cases": len(cases), "seed": args.seed})
    write_json_csv(report.to_dict(), [r.row() for r in report.records], args.report)
    print(f"eval over {len(cases)} cases: MSE {report.mse_mean_pa2:.4e} "
          f"+- {report.mse_sd_pa2:.4e} Pa^2 (worst case {report.worst_index}) "
          f"-> {args.report}")
    return 0


def _cmd_bench(args) -> int:
    models = []
    for path in (p for p in args.models.split(",") if p):
        spec, state = load_model(path)
        models.append((Path(path).name, state, spec))
    solvers = []
    for name in (s for s in args.solvers.split(",") if s):
        if name not in ("bdf", "rk45"):
            raise ValidationError(f"unknown solver {name!r} (expected bdf or rk45)")
        method = "BDF2" if name == "bdf" else "RK45"
        solvers.append((name, name, IntegratorConfig(method=method)))
    records = benchmark(models, solvers, args.cases, args.seed, _parse_grid(args.grid))
    rows = [r.row() for r in records]
    payload = {
        "n_cases": args.cases,
        "grid": args.grid,
        "seed": args.seed,
        "methods": rows,
        "per_case_seconds": {r.label: r.seconds.tolist() for r in records},
    }
    write_json_csv(payload, rows, args.report)
    for r in records:
        print(f"{r.label}: {r.mean:.5f} +- {r.sd:.5f} s")
    return 0


def _cmd_sweep(args) -> int:
    spec, state = load_model(args.model)
    if args.values:
        values = _parse_floats(args.values)
    elif args.range:
        lo, hi = _parse_range(args.range)
        values = np.linspace(lo, hi, args.steps).tolist()
    else:
        raise ValidationError("provide --values or --range for the sweep")
    grid = _parse_grid(args.grid)
    if args.param == "cv":
        rows = sweep_cv(state, spec, values, args.cases_per, args.seed, grid)
    else:
        rows = sweep_length_scale(state, spec, values, args.cases_per, args.seed, grid)
    payload = {"param": args.param, "model": args.model, "seed": args.seed, "rows": rows}
    write_json_csv(payload, rows, args.report)
    print(f"sweep over {len(values)} {args.param} values -> {args.report}")
    return 0


def _cmd_solve(args) -> int:
    nz, nt = _parse_grid(args.grid)
    tvs = np.linspace(0.0, 2.0, nt)
    t_eval = tv_to_time(args.cv, tvs)
    depths = np.linspace(0.0, 1.0, nz)

    profile = args.profile
    if profile.startswith("uniform:"):
        level = float(profile.split(":", 1)[1])
        case = uniform_case(level, args.cv)
    elif profile == "grf":
        ranges = SamplingRanges(cv_range=(args.cv, args.cv))
        grf = GrfSpec(variance=args.grf_sigma2, length_scale=args.grf_length)
        case = sample_case(ranges, "grf", grf, args.seed)
    else:
        raise ValidationError(f"unknown profile {profile!r}; use 'uniform:<Pa>' or 'grf'")

    if args.method == "analytic":
        if not profile.startswith("uniform:"):
            raise ValidationError("the analytical series applies to uniform profiles only")
        values = analytical_field(depths, tvs, float(profile.split(":", 1)[1]))
    else:
        method = "RK45" if args.method == "rk45" else "BDF2"
        cfg = IntegratorConfig(method=method, rtol=args.rtol, atol=args.atol)
        field = solve_field(case, nz, t_eval, cfg)
        values = field.values
        depths = field.depths

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["z", "t", "tv", "u_pa"])
        for i, z in enumerate(depths):
            for j in range(nt):
                writer.writerow([f"{z:.10g}", f"{t_eval[j]:.10g}",
                                 f"{tvs[j]:.10g}", f"{values[i, j]:.10g}"])
    print(f"wrote {nz * nt} grid values to {args.out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "sweep": _cmd_sweep,
    "solve": _cmd_solve,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (StorageError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
