"""Command-line interface: ``svtest test``, ``svtest sequential``, ``svtest simulate``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import report as rep
from .bootstrap import WEIGHT_DISTS, BootstrapPlan
from .data import ClusterNesting, NO_CLUSTERING, load_csv
from .errors import InputError, NumericalError, SequentialAbort, SvTestError
from .sequential import sequential_select
from .simulation import ExperimentSpec, preset, run_experiment
from .statistics import MATRIX, SCALAR

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_INTERNAL = 0, 2, 3, 4
_TAILS = {"upper": "upper", "two": "two_sided", "equal": "equal_tail"}


def _split_levels(s: str) -> list[str]:
    names = [x.strip() for x in s.split(",") if x.strip()]
    if len(names) < 2:
        raise InputError("--levels needs at least two comma-separated level names")
    return names


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--y", required=True, help="outcome column")
    p.add_argument("--x1", action="append", required=True, help="regressor of interest (repeatable)")
    p.add_argument("--x2", action="append", default=[], help="nuisance regressor (repeatable)")
    p.add_argument("--fe-level", default=None, help="add fixed effects for this cluster column")
    p.add_argument("--no-intercept", action="store_true", help="do not add a constant to X2")
    p.add_argument("--stat", choices=["sigma", "Sigma", "both"], default="sigma")
    p.add_argument("--tail", choices=sorted(_TAILS), default="upper")
    p.add_argument("--boot", nargs="?", type=int, const=999, default=None, metavar="B",
                   help="bootstrap with B replications (999 if no value is given)")
    p.add_argument("--weights", choices=WEIGHT_DISTS, default="rademacher")
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--df-factors", action="store_true", help="apply m_c and m_f to the contrast")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--no-timing", action="store_true", help="omit timings (byte-stable output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svtest", description="Score-variance tests for the level of clustering.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test fine against coarse clustering")
    _model_args(t)
    t.add_argument("--fine", default=None, help="null (fine) level; 'none' for no clustering")
    t.add_argument("--coarse", default=None, help="alternative (coarse) level")
    t.add_argument("--levels", default=None, help="comma-separated levels, finest first: test every pair")

    s = sub.add_parser("sequential", help="choose the clustering level sequentially")
    _model_args(s)
    s.add_argument("--levels", required=True, help="comma-separated levels, finest first (e.g. none,room,school)")
    s.add_argument("--coef", default=None, help="regressor of interest to test when several are given")

    m = sub.add_parser("simulate", help="run a Monte Carlo preset or spec file")
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="fig1a .. fig8d, or a figure name such as fig3")
    src.add_argument("--spec", help="JSON file with experiment fields")
    m.add_argument("--scale", choices=["desk", "paper"], default="desk")
    m.add_argument("--reps", type=int, default=None, help="override the number of replications")
    m.add_argument("--boot", type=int, default=None, metavar="B", help="override bootstrap replications")
    m.add_argument("--seed", type=int, default=None)
    m.add_argument("--threads", type=int, default=1)
    m.add_argument("--out", default=".", help="directory for the CSV and JSON outputs")
    return parser


def _load(args, levels: list[str]):
    clusters = [lv for lv in levels if lv != NO_CLUSTERING]
    data, nesting = load_csv(args.data, args.y, args.x1, args.x2, clusters,
                             add_intercept=not args.no_intercept, fixed_effects_level=args.fe_level)
    return data, nesting


def _kinds(stat: str) -> list[str]:
    return {"sigma": [SCALAR], "Sigma": [MATRIX], "both": [SCALAR, MATRIX]}[stat]


def _emit(report: dict, text: str, out: str | None) -> None:
    sys.stdout.write(text)
    if out:
        Path(out).write_text(rep.dumps(report), encoding="utf-8")


def cmd_test(args) -> dict:
    if args.levels:
        levels = _split_levels(args.levels)
        pairs = [(a, b) for i, a in enumerate(levels) for b in levels[i + 1 :]]
    else:
        if not args.coarse:
            raise InputError("give --coarse (and optionally --fine), or --levels")
        fine = args.fine or NO_CLUSTERING
        levels = [fine, args.coarse]
        pairs = [(fine, args.coarse)]
    if len(set(levels)) != len(levels):
        raise InputError(f"level names must differ, got {levels}")
    data, nesting = _load(args, levels)
    report = rep.build_test_report(
        data, nesting, pairs, _kinds(args.stat), _TAILS[args.tail], args.boot, args.weights, args.seed,
        args.alpha, args.df_factors, args.fe_level, timing=not args.no_timing, threads=args.threads,
    )
    _emit(report, rep.render_test(report), args.out)
    return report


def cmd_sequential(args) -> dict:
    levels = _split_levels(args.levels)
    data, full = _load(args, levels)
    nesting = ClusterNesting(tuple(full[n] for n in levels))
    if args.coef:
        if args.coef not in data.x1_names:
            raise InputError(f"--coef {args.coef!r} is not among the regressors of interest {list(data.x1_names)}")
        data = data.focus(data.x1_names.index(args.coef))
    if args.stat == "both":
        raise InputError("sequential selection uses one statistic; choose --stat sigma or --stat Sigma")
    plan = BootstrapPlan(args.boot, args.weights, None, args.seed) if args.boot else None
    t0 = time.perf_counter()
    res = sequential_select(data, nesting, args.stat, args.alpha, "bootstrap" if plan else "asymptotic", plan,
                            _TAILS[args.tail], args.df_factors)
    settings = {"stat": args.stat, "tail": _TAILS[args.tail], "B": args.boot, "seed": args.seed,
                "weights": args.weights if args.boot else None, "df_factors": args.df_factors}
    report = rep.build_sequential_report(data, res, settings, args.fe_level,
                                         None if args.no_timing else time.perf_counter() - t0)
    _emit(report, rep.render_sequential(report), args.out)
    return report


def _spec_from_file(path: str) -> ExperimentSpec:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read spec file {path}: {exc}") from None
    fields = {f.name for f in dataclasses.fields(ExperimentSpec)}
    unknown = set(raw) - fields
    if unknown:
        raise InputError(f"unknown spec fields: {sorted(unknown)}")
    if "grid" in raw:
        raw["grid"] = tuple(
            (tuple(p) if isinstance(p, list) else p, tuple(tuple(v) if isinstance(v, list) else v for v in vals))
            for p, vals in raw["grid"]
        )
    for key in ("tails", "engines", "pretest_alphas", "stream"):
        if key in raw:
            raw[key] = tuple(raw[key])
    return ExperimentSpec(**raw)


def cmd_simulate(args) -> list:
    specs = preset(args.preset, args.scale) if args.preset else [_spec_from_file(args.spec)]
    over = {}
    if args.reps is not None:
        over["R"] = args.reps
    if args.boot is not None:
        over["B"] = args.boot
    if args.seed is not None:
        over["seed"] = args.seed
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    for spec in specs:
        spec = dataclasses.replace(spec, **over)
        summary = run_experiment(spec, threads=args.threads)
        csv_path = summary.write_csv(out_dir / f"{spec.name}.csv")
        summary.write_meta(out_dir / f"{spec.name}.json")
        first = summary.rows[0]
        metrics = ", ".join(f"{k}={v:.4f}" for k, v in first.items()
                            if isinstance(v, float) and not k.endswith("_se") and k not in dict(spec.grid))
        print(f"{spec.name}: {len(summary.rows)} design points, R={spec.R} -> {csv_path}; first point: {metrics}")
        summaries.append(summary)
    return summaries


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"test": cmd_test, "sequential": cmd_sequential, "simulate": cmd_simulate}
    try:
        handlers[args.command](args)
    except InputError as exc:
        print(f"svtest: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SequentialAbort as exc:
        done = ", ".join(f"{s.fine} vs {s.coarse}: P={s.p_value:.3f}" for s in exc.trail) or "none"
        print(f"svtest: {exc}\n  completed steps: {done}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc.cause, NumericalError) else EXIT_INPUT
    except NumericalError as exc:
        print(f"svtest: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SvTestError as exc:
        print(f"svtest: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code for bugs
        print(f"svtest: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
