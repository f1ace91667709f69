"""Assembling, rendering and validating the JSON/text reports of the CLI."""

from __future__ import annotations

import json
import math
import time
import warnings
from importlib import resources

from . import __version__
from .bootstrap import BootstrapPlan, SvProblem, bootstrap_many
from .data import ClusterNesting, Partition, RegressionData
from .kernels import BACKEND
from .regression import partial_out
from .robust import cv3, hc3
from .sequential import SequentialResult
from .statistics import MATRIX, SCALAR, asym_pvalue

SCHEMA_VERSION = "1.0"
EQUAL_TAIL_NOTE = "equal-tail bootstrap P = 2 min(#{tau* <= tau}, #{tau* >= tau}) / B, capped at 1"
INTERVAL_NOTE = "intervals use the standard normal quantile"


def load_schema() -> dict:
    return json.loads(resources.files("svtest").joinpath("report_schema.json").read_text(encoding="utf-8"))


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def coefficient_table(data: RegressionData, levels: list[Partition]) -> list[dict]:
    """beta_hat with HC3 (no clustering) and CV3 SEs for each clustering level."""
    rows = []
    se_by = {}
    _, fit = partial_out(data)
    for lev in levels:
        if lev.is_singletons:
            se_by["HC3"] = hc3(data, fit).se
        else:
            se_by[f"CV3[{lev.name}]"] = cv3(data, lev, fit).se
    for j, name in enumerate(data.x1_names):
        b = float(fit.beta_hat[j])
        se = {k: _num(v[j]) for k, v in se_by.items()}
        t = {k: (_num(b / v) if v else None) for k, v in se.items()}
        rows.append({"name": name, "estimate": b, "se": se, "t": t})
    return rows


def _tail_for(kind: str, tail: str) -> str:
    return "two_sided" if kind == MATRIX else tail


def sv_rows(
    data: RegressionData,
    fine: Partition,
    coarse: Partition,
    kinds: list[str],
    tail: str,
    plan: BootstrapPlan | None,
    alpha: float,
    df_factor: bool,
    threads: int = 1,
) -> tuple[list[dict], list[str]]:
    """SV test rows for one (fine, coarse) pair.

    The scalar statistic is computed coefficient by coefficient when there
    are several regressors of interest; the Wald statistic tests them jointly.
    All rows of the pair share one set of bootstrap weights.
    """
    problems = []
    if SCALAR in kinds:
        for j in range(data.k1):
            sub = data if data.k1 == 1 else data.focus(j)
            problems.append((data.x1_names[j], sub, SCALAR))
    if MATRIX in kinds:
        problems.append(("(joint)", data, MATRIX))
    rows, notes = [], []
    for coef, sub, kind in problems:
        problem = SvProblem(sub, fine, coarse, df_factor)
        stat = problem.statistic(kind)
        t = _tail_for(kind, tail)
        row = {
            "coefficient": coef,
            "fine": fine.name,
            "coarse": coarse.name,
            "G_fine": fine.G,
            "G_coarse": coarse.G,
            "stat": "tau_sigma" if kind == SCALAR else "tau_Sigma",
            "dof": stat.dof,
            "value": _num(stat.value),
            "tail": "chi2_upper" if kind == MATRIX else t,
            "asymptotic_p": None if t == "equal_tail" else _num(asym_pvalue(stat, t)),
            "bootstrap_p": None,
            "B": None,
            "critical_value": None,
            "failed_replications": None,
        }
        if plan is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = bootstrap_many(problem, plan.with_(draw_level=fine, tail=t), [(kind, t)], alphas=(alpha,),
                                     keep_tau_star=False, threads=threads)[0]
            cv = res.critical_values.get(alpha)
            row.update(bootstrap_p=_num(res.p_value), B=plan.B, failed_replications=res.n_failed,
                       critical_value=list(cv) if isinstance(cv, tuple) else _num(cv))
            for msg in res.warnings:
                if msg not in notes:
                    notes.append(msg)
        rows.append(row)
    return rows, notes


def model_echo(data: RegressionData, fe_level: str | None) -> dict:
    return {
        "y": data.y_name,
        "x1": list(data.x1_names),
        "x2": [n for n in data.x2_names if not n.startswith("fe[")],
        "fixed_effects": fe_level,
        "n_fixed_effect_columns": sum(1 for n in data.x2_names if n.startswith("fe[")),
        "N": data.N,
        "k1": data.k1,
        "k2": data.k2,
    }


def build_test_report(
    data: RegressionData,
    nesting: ClusterNesting,
    pairs: list[tuple[str, str]],
    kinds: list[str],
    tail: str = "upper",
    B: int | None = None,
    weights: str = "rademacher",
    seed: int = 0,
    alpha: float = 0.05,
    df_factor: bool = False,
    fe_level: str | None = None,
    timing: bool = True,
    threads: int = 1,
) -> dict:
    t0 = time.perf_counter()
    notes: list[str] = []
    tests = []
    for i, (f, c) in enumerate(pairs):
        plan = BootstrapPlan(B, weights, None, seed, "upper", (i,)) if B else None
        rows, msgs = sv_rows(data, nesting[f], nesting[c], kinds, tail, plan, alpha, df_factor, threads)
        tests.extend(rows)
        notes.extend(m for m in msgs if m not in notes)
    if df_factor:
        notes.append("df factors m_c and m_f applied to the contrast")
    if tail == "equal_tail" and B:
        notes.append(EQUAL_TAIL_NOTE)
    names = dict.fromkeys([p for pair in pairs for p in pair])
    levels = [nesting[n] for n in nesting.names if n in names]
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "svtest", "version": __version__, "backend": BACKEND},
        "command": "test",
        "model": model_echo(data, fe_level),
        "levels": [{"name": lv.name, "G": lv.G} for lv in levels],
        "coefficients": coefficient_table(data, levels),
        "tests": tests,
        "settings": {
            "engine": "bootstrap" if B else "asymptotic",
            "stat": [("sigma" if k == SCALAR else "Sigma") for k in kinds],
            "tail": tail,
            "B": B,
            "weights": weights if B else None,
            "seed": seed,
            "alpha": alpha,
            "df_factors": df_factor,
        },
        "notes": [INTERVAL_NOTE],
        "warnings": notes,
    }
    if timing:
        report["timing"] = {"seconds": round(time.perf_counter() - t0, 6)}
    return report


def build_sequential_report(
    data: RegressionData,
    res: SequentialResult,
    settings: dict,
    fe_level: str | None = None,
    timing_s: float | None = None,
) -> dict:
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "svtest", "version": __version__, "backend": BACKEND},
        "command": "sequential",
        "model": model_echo(data, fe_level),
        "levels": list(res.level_names),
        "steps": [
            {"m": s.m, "fine": s.fine, "coarse": s.coarse, "value": _num(s.statistic), "p": _num(s.p_value),
             "rejected": s.rejected}
            for s in res.per_step
        ],
        "m_hat": res.m_hat,
        "selected_level": res.level,
        "coarsest_retained": res.m_hat == res.p,
        "settings": dict(settings, alpha=res.alpha, engine=res.engine),
        "warnings": [],
    }
    if timing_s is not None:
        report["timing"] = {"seconds": round(timing_s, 6)}
    return report


def _f(x, spec=".4f") -> str:
    return "-" if x is None else format(x, spec)


def render_test(report: dict) -> str:
    m = report["model"]
    lines = [
        f"y = {m['y']}   N = {m['N']}   k1 = {m['k1']}   k2 = {m['k2']}"
        + (f"   fixed effects: {m['fixed_effects']}" if m["fixed_effects"] else ""),
        "levels: " + ", ".join(f"{lv['name']} (G={lv['G']})" for lv in report["levels"]),
        "",
        "Coefficients",
    ]
    se_keys = list(report["coefficients"][0]["se"]) if report["coefficients"] else []
    head = f"  {'':<14}{'estimate':>12}" + "".join(f"{k:>18}" for k in se_keys)
    lines.append(head)
    for row in report["coefficients"]:
        lines.append(f"  {row['name']:<14}{row['estimate']:>12.5f}" + "".join(f"{_f(row['se'][k], '.5f'):>18}" for k in se_keys))
        lines.append(f"  {'  t':<14}{'':>12}" + "".join(f"{_f(row['t'][k], '.3f'):>18}" for k in se_keys))
    lines += ["", "Score-variance tests"]
    lines.append(f"  {'coefficient':<14}{'H0 vs H1':<24}{'stat':>10}{'value':>11}{'tail':>12}{'asy P':>9}{'boot P':>9}")
    for t in report["tests"]:
        pair = f"{t['fine']} vs {t['coarse']}"
        lines.append(
            f"  {t['coefficient']:<14}{pair:<24}{t['stat']:>10}{_f(t['value'], '.3f'):>11}{t['tail']:>12}"
            f"{_f(t['asymptotic_p'], '.3f'):>9}{_f(t['bootstrap_p'], '.3f'):>9}"
        )
    s = report["settings"]
    lines.append("")
    if s["B"]:
        lines.append(f"bootstrap: B = {s['B']}, weights = {s['weights']}, seed = {s['seed']}")
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    if "timing" in report:
        lines.append(f"time: {report['timing']['seconds']:.3f}s")
    return "\n".join(lines) + "\n"


def render_sequential(report: dict) -> str:
    lines = ["Sequential selection (alpha = {:g}, engine = {})".format(report["settings"]["alpha"],
                                                                       report["settings"]["engine"])]
    for s in report["steps"]:
        verdict = "reject" if s["rejected"] else "do not reject"
        lines.append(f"  step {s['m']}: {s['fine']} vs {s['coarse']}: stat = {_f(s['value'], '.3f')}, "
                     f"P = {_f(s['p'], '.3f')} -> {verdict}")
    lines.append(f"selected level: m_hat = {report['m_hat']} ({report['selected_level']})")
    if report["coarsest_retained"]:
        lines.append("every test rejected: coarsest level retained")
    return "\n".join(lines) + "\n"


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, ensure_ascii=False, allow_nan=False) + "\n"
