"""Monte Carlo laboratory.

Regressors and disturbances come from a two-type factor model: within
each cluster, observations in odd positions share one random effect and
those in even positions another. Designs cover null rejection rates,
power, the sequential procedure and pre-test standard errors. Presets
``fig1a`` .. ``fig8d`` run at "desk" scale by default.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .bootstrap import BootstrapPlan, SvProblem, bootstrap_many
from .data import ClusterNesting, Partition, RegressionData, fixed_effect_dummies
from .errors import ExperimentFailure, InputError, SvTestError
from .robust import cv3, hc3
from .sequential import sequential_select
from .statistics import MATRIX, SCALAR, asym_pvalue, normalize_kind

TASKS = ("test", "sequential", "pretest")
U_KINDS = ("independent", "fine", "coarse", "convex")
FE_LEVELS = ("none", "fine", "coarse")
MAX_FAIL_SHARE = 0.01


@dataclass(frozen=True)
class FactorDgpSpec:
    rho: float
    level: Partition | None = None
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise InputError(f"rho must lie in [0, 1), got {self.rho}")


def within_positions(assignment) -> np.ndarray:
    """1-based position of each observation within its cluster (data order)."""
    a = np.asarray(assignment, dtype=np.intp)
    order = np.argsort(a, kind="stable")
    sa = a[order]
    first = np.searchsorted(sa, sa, side="left")
    pos = np.empty(a.size, dtype=np.intp)
    pos[order] = np.arange(a.size) - first + 1
    return pos


def gen_factor(spec: FactorDgpSpec, sizes=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """``sqrt(rho) xi_g^(1 or 2) + sqrt(1 - rho) zeta_gi``; odd within-cluster
    positions load on the first cluster effect, even ones on the second."""
    if sizes is not None:
        sizes = np.asarray(sizes, dtype=np.intp)
        assignment = np.repeat(np.arange(sizes.size), sizes)
    elif spec.level is not None:
        assignment = spec.level.assignment
    else:
        raise InputError("gen_factor needs cluster sizes or a partition")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    G = int(assignment.max()) + 1
    xi = rng.standard_normal((G, 2))
    zeta = rng.standard_normal(assignment.size)
    parity = (within_positions(assignment) - 1) % 2
    return math.sqrt(spec.rho) * xi[assignment, parity] + math.sqrt(1.0 - spec.rho) * zeta


def allocate_sizes(N: int, G: int, delta: float) -> np.ndarray:
    """Cluster sizes growing exponentially in ``delta``; the last cluster takes the remainder."""
    if G < 1 or N < G:
        raise InputError(f"need N >= G >= 1 (N={N}, G={G})")
    if delta < 0:
        raise InputError(f"delta must be >= 0, got {delta}")
    w = np.exp(delta * np.arange(1, G + 1) / G)
    share = N * w / w.sum()
    sizes = np.empty(G, dtype=np.int64)
    # the epsilon keeps exact integers (delta = 0) from flooring one below
    sizes[:-1] = np.floor(share[:-1] + 1e-9).astype(np.int64)
    sizes[-1] = N - sizes[:-1].sum()
    if sizes.min() < 1:
        raise InputError(f"delta = {delta} leaves an empty cluster for N = {N}, G = {G}")
    return sizes


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative Monte Carlo design. ``grid`` lists ``(param, values)``
    pairs expanded as a Cartesian product; ``param`` may be a tuple of names
    with tuples of values to vary several fields together."""

    name: str = "custom"
    task: str = "test"
    G_coarse: int = 10
    fine_per_coarse: int = 4
    obs_per_fine: int = 100
    N: int | None = None  # with delta: total observations split over coarse clusters
    delta: float | None = None
    k1: int = 1
    n_nuisance: int = 0
    x_rho: float = 0.5
    u_kind: str = "independent"
    u_rho: float = 0.0
    eta: float = 0.0
    eta_fine: str = "independent"  # the (1 - eta) component: "independent" or "fine"
    rho_c: float = 0.25
    rho_f: float = 0.25
    fe_level: str = "coarse"
    null_level: str = "fine"
    alt_level: str = "coarse"
    stat: str = "sigma"
    tails: tuple = ("upper",)
    engines: tuple = ("asymptotic", "bootstrap")
    draw: str = "null"  # bootstrap draw level: "null" or "none" (ordinary wild)
    R: int = 2000
    B: int = 199
    weights: str = "rademacher"
    alpha: float = 0.05
    pretest_alphas: tuple = (0.05, 0.20)
    df_factor: bool = True  # m_c, m_f in the contrast, as in the published experiments
    direct_test: bool = False
    check_min_rule: bool = False
    seed: int = 20240601
    stream: tuple = ()
    grid: tuple = ()
    notes: str = ""

    def __post_init__(self):
        if self.task not in TASKS:
            raise InputError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.u_kind not in U_KINDS:
            raise InputError(f"unknown disturbance kind {self.u_kind!r}")
        if self.fe_level not in FE_LEVELS:
            raise InputError(f"unknown fixed-effect level {self.fe_level!r}")
        if int(self.R) < 1:
            raise InputError("R must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise InputError(f"eta must lie in [0, 1], got {self.eta}")
        object.__setattr__(self, "tails", tuple(self.tails))
        object.__setattr__(self, "engines", tuple(self.engines))
        object.__setattr__(self, "grid", tuple((p, tuple(v)) for p, v in self.grid))

    def points(self) -> list[dict]:
        """Grid points as dicts of overridden fields."""
        if not self.grid:
            return [{}]
        axes = []
        for param, values in self.grid:
            if isinstance(param, tuple):
                axes.append([dict(zip(param, v)) for v in values])
            else:
                axes.append([{param: v} for v in values])
        out = []
        for combo in itertools.product(*axes):
            d = {}
            for part in combo:
                d.update(part)
            out.append(d)
        return out

    def at(self, point: dict, index: int) -> "ExperimentSpec":
        return dataclasses.replace(self, grid=(), stream=self.stream + (index,), **point)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grid"] = [[list(p) if isinstance(p, tuple) else p, [list(v) if isinstance(v, tuple) else v for v in vals]]
                     for p, vals in self.grid]
        return d


def design_layout(spec: ExperimentSpec) -> tuple[np.ndarray, np.ndarray | None]:
    """Coarse assignment and fine assignment (None when there is no fine level)."""
    G = spec.G_coarse
    if spec.delta is not None:
        if spec.N is None:
            raise InputError("a size-heterogeneity design needs N")
        sizes = allocate_sizes(spec.N, G, spec.delta)
        return np.repeat(np.arange(G), sizes), None
    M, n = spec.fine_per_coarse, spec.obs_per_fine
    if G < 1 or M < 1 or n < 1:
        raise InputError("G_coarse, fine_per_coarse and obs_per_fine must be positive")
    fine = np.repeat(np.arange(G * M), n)
    return fine // M, (fine if M > 1 else None)


def replication_rng(spec: ExperimentSpec, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=spec.stream + (int(r),)))


def _disturbances(spec: ExperimentSpec, coarse: Partition, fine: Partition | None, rng) -> np.ndarray:
    N = coarse.N

    def factor(level, rho):
        if level is None:
            raise InputError("this disturbance design needs a fine level")
        return gen_factor(FactorDgpSpec(rho, level), rng=rng)

    if spec.u_kind == "independent":
        return rng.standard_normal(N)
    if spec.u_kind == "fine":
        return factor(fine, spec.u_rho)
    if spec.u_kind == "coarse":
        return factor(coarse, spec.u_rho)
    eps_c = factor(coarse, spec.rho_c)
    eps_f = factor(fine, spec.rho_f) if spec.eta_fine == "fine" else rng.standard_normal(N)
    eta = spec.eta
    return (eta * eps_c + (1.0 - eta) * eps_f) / math.sqrt(eta**2 + (1.0 - eta) ** 2)


def gen_sample(spec: ExperimentSpec, r: int = 0) -> tuple[RegressionData, ClusterNesting]:
    """One simulated dataset. All coefficients are zero, so ``y = u``."""
    rng = replication_rng(spec, r)
    coarse_a, fine_a = design_layout(spec)
    N = coarse_a.size
    coarse = Partition.from_assignment("coarse", coarse_a)
    fine = Partition.from_assignment("fine", fine_a) if fine_a is not None else None
    xs = [gen_factor(FactorDgpSpec(spec.x_rho, coarse), rng=rng) for _ in range(spec.k1 + spec.n_nuisance)]
    X1 = np.column_stack(xs[: spec.k1])
    u = _disturbances(spec, coarse, fine, rng)
    x2 = xs[spec.k1 :]
    names = [f"w{j + 1}" for j in range(spec.n_nuisance)]
    if spec.fe_level == "none":
        x2 = [np.ones(N)] + x2
        names = ["const"] + names
    else:
        lev = coarse if spec.fe_level == "coarse" else fine
        if lev is None:
            raise InputError("fine fixed effects need a fine level")
        D, dn = fixed_effect_dummies(lev, drop_first=False)
        x2 = x2 + list(D.T)
        names = names + dn
    labels = {"coarse": coarse_a}
    levels = [Partition.singletons(N)]
    if fine is not None:
        labels["fine"] = fine_a
        levels.append(fine)
    levels.append(coarse)
    data = RegressionData(u, X1, np.column_stack(x2), labels, "y",
                          tuple(f"x{j + 1}" for j in range(spec.k1)), tuple(names))
    return data, ClusterNesting(tuple(levels))


def _tail_list(spec: ExperimentSpec) -> list[str]:
    return ["two_sided"] if normalize_kind(spec.stat) == MATRIX else list(spec.tails)


def _tail_label(kind: str, tail: str) -> str:
    return "wald" if kind == MATRIX else tail


def _plan(spec: ExperimentSpec, r: int, draw: Partition, extra=()) -> BootstrapPlan:
    return BootstrapPlan(spec.B, spec.weights, draw, spec.seed, "upper", spec.stream + (int(r),) + tuple(extra))


def _run_test(spec, r, data, nesting) -> dict:
    kind = normalize_kind(spec.stat)
    fine, coarse = nesting[spec.null_level], nesting[spec.alt_level]
    problem = SvProblem(data, fine, coarse, spec.df_factor)
    tails = _tail_list(spec)
    out = {}
    if "asymptotic" in spec.engines:
        stat = problem.statistic(kind)
        out["tau"] = stat.value
        for t in tails:
            out[f"asy_{_tail_label(kind, t)}"] = float(asym_pvalue(stat, t) < spec.alpha)
    if "bootstrap" in spec.engines:
        draw = fine if spec.draw == "null" else nesting[0]
        res = bootstrap_many(problem, _plan(spec, r, draw), [(kind, t) for t in tails],
                             alphas=(spec.alpha,), keep_tau_star=False, warn=False)
        for t, br in zip(tails, res):
            out[f"boot_{_tail_label(kind, t)}"] = float(br.p_value < spec.alpha)
        out["tau"] = res[0].tau
    return out


def _run_sequential(spec, r, data, nesting) -> dict:
    plan = _plan(spec, r, None)
    res = sequential_select(data, nesting, spec.stat, spec.alpha, "bootstrap", plan, "upper",
                            df_factor=spec.df_factor, run_all=spec.check_min_rule)
    out = {f"m{m}": float(res.m_hat == m) for m in range(nesting.p + 1)}
    out["min_rule_agrees"] = float(res.m_hat_min == res.m_hat)
    if spec.direct_test:
        problem = SvProblem(data, nesting[0], nesting[nesting.p], spec.df_factor)
        br = bootstrap_many(problem, _plan(spec, r, nesting[0], (nesting.p,)),
                            [(SCALAR, "upper")], keep_tau_star=False, warn=False)[0]
        out["direct_reject"] = float(br.p_value < spec.alpha)
    return out


def _run_pretest(spec, r, data, nesting) -> dict:
    fine, coarse = nesting[spec.null_level], nesting[spec.alt_level]
    problem = SvProblem(data, fine, coarse, spec.df_factor)
    stat = problem.statistic(SCALAR)
    p = asym_pvalue(stat, "upper")
    fit = problem.fit
    se_f = float((hc3(data, fit) if fine.is_singletons else cv3(data, fine, fit)).se[0])
    se_c = float(cv3(data, coarse, fit).se[0])
    out = {"beta": float(fit.beta_hat[0]), "se_fine": se_f, "se_coarse": se_c}
    for a in spec.pretest_alphas:
        out[f"se_pre{a:g}"] = se_c if p < a else se_f
    return out


_RUNNERS = {"test": _run_test, "sequential": _run_sequential, "pretest": _run_pretest}


def run_replication(spec: ExperimentSpec, r: int) -> dict:
    data, nesting = gen_sample(spec, r)
    return _RUNNERS[spec.task](spec, r, data, nesting)


def _aggregate(spec: ExperimentSpec, outs: list[dict]) -> dict:
    R = len(outs)
    row: dict = {"R": R}
    if spec.task == "pretest":
        beta = np.array([o["beta"] for o in outs])
        sd = float(np.std(beta, ddof=1)) if R > 1 else float("nan")
        z = float(stats.norm.ppf(1.0 - spec.alpha / 2.0))
        row["sd_beta"] = sd
        for key in [k for k in outs[0] if k.startswith("se_")]:
            se = np.array([o[key] for o in outs])
            cover = np.abs(beta) <= z * se
            tag = key[3:]
            row[f"rmse_{tag}"] = float(np.sqrt(np.mean((se - sd) ** 2)))
            row[f"cover_{tag}"] = float(cover.mean())
            row[f"cover_{tag}_se"] = float(math.sqrt(max(cover.mean() * (1 - cover.mean()), 0.0) / R))
        return row
    for key in outs[0]:
        if key == "tau":
            continue
        v = np.array([o[key] for o in outs])
        f = float(v.mean())
        row[key] = f
        row[f"{key}_se"] = float(math.sqrt(f * (1.0 - f) / R))
    return row


@dataclass
class ExperimentSummary:
    spec: ExperimentSpec
    rows: list
    meta: dict = field(default_factory=dict)
    raw: list = field(default_factory=list, repr=False)

    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows:
            for k in row:
                if k not in cols:
                    cols.append(k)
        return cols

    def write_csv(self, path) -> Path:
        path = Path(path)
        cols = self.columns()
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: _fmt(row.get(k, "")) for k in cols})
        return path

    def write_meta(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def run_experiment(spec: ExperimentSpec, threads: int = 1, keep_raw: bool = False) -> ExperimentSummary:
    """Run every grid point for ``spec.R`` replications.

    Replication ``r`` of grid point ``j`` draws from the stream keyed by
    ``(seed, j, r)``; bootstrap weights extend that key, so summaries are
    identical for any thread count.
    """
    rows, raw = [], []
    for j, point in enumerate(spec.points()):
        sub = spec.at(point, j)
        if threads > 1 and sub.R > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(lambda r: _safe(sub, r), range(sub.R)))
        else:
            outs = [_safe(sub, r) for r in range(sub.R)]
        failed = [o for o in outs if isinstance(o, Exception)]
        good = [o for o in outs if not isinstance(o, Exception)]
        if len(failed) > MAX_FAIL_SHARE * sub.R or not good:
            raise ExperimentFailure(
                f"{len(failed)} of {sub.R} replications failed at {point or 'the design point'} "
                f"(first error: {failed[0]})", len(failed), sub.R,
            )
        row = dict(point)
        row.update(_aggregate(sub, good))
        row["failed"] = len(failed)
        rows.append(row)
        if keep_raw:
            raw.append(good)
    meta = {
        "preset": spec.name,
        "seed": spec.seed,
        "R": spec.R,
        "B": spec.B if spec.task != "pretest" else None,
        "spec": spec.to_dict(),
        "dgp": {
            "coefficients": "all zero (the statistics depend on the data only through residuals from a regression on X)",
            "factor_parity": "1-based position within the cluster the factor is defined on",
            "convex_mix_scale": "1 / sqrt(eta^2 + (1 - eta)^2)",
            "contrast": "m_c sigma2_c - m_f sigma2_f" if spec.df_factor else "sigma2_c - sigma2_f (no df factors)",
        },
        "notes": spec.notes,
    }
    return ExperimentSummary(spec, rows, meta, raw)


def _safe(spec: ExperimentSpec, r: int):
    try:
        return run_replication(spec, r)
    except SvTestError as exc:
        return exc


# presets -----------------------------------------------------------------

def _scale(scale: str, desk, paper):
    if scale not in ("desk", "paper"):
        raise InputError(f"unknown scale {scale!r}; expected 'desk' or 'paper'")
    return desk if scale == "desk" else paper


def _fig1(panel: str, scale: str, stat: str = "Sigma") -> ExperimentSpec:
    fine_null = panel in "ac"
    boot = panel in "cd"
    gcs = _scale(scale, (6, 12, 24), (6, 9, 12, 15, 18, 24, 30, 36))
    k1s = _scale(scale, (1, 2, 3), (1, 2, 3, 4, 5))
    common = dict(
        stat=stat, engines=("bootstrap",) if boot else ("asymptotic",),
        R=_scale(scale, 2000, 400_000), B=_scale(scale, 199, 399),
        grid=(("G_coarse", gcs), ("k1", k1s)),
    )
    if fine_null:
        return ExperimentSpec(fine_per_coarse=4, obs_per_fine=100, fe_level="fine", u_kind="fine", u_rho=0.1,
                              null_level="fine", draw="null", **common)
    return ExperimentSpec(fine_per_coarse=1, obs_per_fine=400, fe_level="coarse", u_kind="independent",
                          null_level="none", draw="null", **common)


def _fig2(panel: str, scale: str) -> ExperimentSpec:
    boot = panel in "cd"
    k1s = _scale(scale, (1, 3), (1, 3, 5))
    common = dict(stat="Sigma", G_coarse=8, engines=("bootstrap",) if boot else ("asymptotic",),
                  R=_scale(scale, 2000, 400_000), B=_scale(scale, 199, 399))
    if panel in "ac":
        Ms = _scale(scale, (3, 6, 12), (3, 4, 5, 6, 7, 8, 9, 10, 11, 12))
        return ExperimentSpec(obs_per_fine=100, u_kind="fine", u_rho=0.1, null_level="fine",
                              grid=(("fe_level", ("fine", "none")), ("fine_per_coarse", Ms), ("k1", k1s)), **common)
    Ns = _scale(scale, (25, 100, 400), (25, 50, 100, 200, 400))
    return ExperimentSpec(fine_per_coarse=1, u_kind="independent", null_level="none",
                          grid=(("fe_level", ("coarse", "none")), ("obs_per_fine", Ns), ("k1", k1s)), **common)


def _fig3(panel: str, scale: str) -> ExperimentSpec:
    boot = panel in "cd"
    gcs = _scale(scale, (3, 6, 12, 24), (3, 4, 6, 9, 12, 18, 24, 36))
    common = dict(stat="sigma", tails=("upper", "two_sided"), engines=("bootstrap",) if boot else ("asymptotic",),
                  R=_scale(scale, 2000, 400_000), B=_scale(scale, 199, 399), grid=(("G_coarse", gcs),))
    if panel in "ac":
        return ExperimentSpec(fine_per_coarse=4, obs_per_fine=100, fe_level="fine", u_kind="fine", u_rho=0.1,
                              null_level="fine", **common)
    return ExperimentSpec(fine_per_coarse=1, obs_per_fine=400, fe_level="coarse", u_kind="independent",
                          null_level="none", **common)


def _fig4(panel: str, scale: str) -> ExperimentSpec:
    rhos = _scale(scale, (0.0, 0.05, 0.10), (0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10))
    common = dict(stat="sigma", G_coarse=10, u_kind="coarse", engines=("bootstrap",),
                  tails=("upper", "two_sided", "equal_tail"),
                  R=_scale(scale, 500, 400_000), B=_scale(scale, 199, 999))
    if panel == "a":
        return ExperimentSpec(fe_level="coarse", null_level="fine",
                              grid=((("fine_per_coarse", "obs_per_fine"), ((2, 250), (4, 125), (10, 50))),
                                    ("u_rho", rhos)), **common)
    return ExperimentSpec(fine_per_coarse=1, obs_per_fine=500, null_level="none",
                          grid=(("fe_level", ("coarse", "none")), ("u_rho", rhos)), **common)


def _fig5(panel: str, scale: str) -> ExperimentSpec:
    deltas = _scale(scale, (0.0, 1.0, 2.0, 3.0, 4.0), tuple(np.round(np.arange(0, 4.01, 0.25), 2)))
    return ExperimentSpec(stat="sigma", G_coarse=10, N=1000, delta=0.0, fe_level="coarse", null_level="none",
                          u_kind="coarse", u_rho=0.0 if panel == "a" else 0.1, tails=("upper",),
                          R=_scale(scale, 2000, 400_000), B=_scale(scale, 199, 399), grid=(("delta", deltas),))


def _fig6(panel: str, scale: str) -> ExperimentSpec:
    rhos = _scale(scale, (0.0, 0.04, 0.16, 0.64), (0.0, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64))
    return ExperimentSpec(task="sequential", stat="sigma", G_coarse=8, fine_per_coarse=6, obs_per_fine=50,
                          fe_level="coarse", u_kind="coarse" if panel == "a" else "fine", direct_test=True,
                          check_min_rule=True, R=_scale(scale, 1000, 400_000), B=_scale(scale, 199, 999),
                          grid=(("u_rho", rhos),))


def _fig78(panel: str, scale: str) -> ExperimentSpec:
    etas = _scale(scale, (0.0, 0.25, 0.5, 0.75, 1.0), tuple(np.round(np.arange(0, 1.001, 0.05), 2)))
    fine_null = panel in "cd"
    big = panel in "bd"
    return ExperimentSpec(
        task="pretest", G_coarse=12, fine_per_coarse=8, obs_per_fine=250 if big else 50,
        k1=1, n_nuisance=7, fe_level="coarse", u_kind="convex", rho_c=0.25, rho_f=0.25,
        eta_fine="fine" if fine_null else "independent", null_level="fine" if fine_null else "none",
        R=_scale(scale, 500, 400_000), grid=(("eta", etas),),
        notes=("eight factor regressors (one of interest, seven nuisance) with rho = 0.5 at the coarse level; "
               "coarse component rho = 0.25; fine component "
               + ("rho = 0.25 over 96 fine clusters" if fine_null else "i.i.d. normal")),
    )


def _builders():
    out = {}
    for p in "abcd":
        out[f"fig1{p}"] = lambda s, p=p: _fig1(p, s)
        out[f"fig2{p}"] = lambda s, p=p: _fig2(p, s)
        out[f"fig3{p}"] = lambda s, p=p: _fig3(p, s)
        out[f"fig7{p}"] = lambda s, p=p: _fig78(p, s)
        out[f"fig8{p}"] = lambda s, p=p: _fig78(p, s)
    for p in "ab":
        out[f"fig4{p}"] = lambda s, p=p: _fig4(p, s)
        out[f"fig5{p}"] = lambda s, p=p: _fig5(p, s)
        out[f"fig6{p}"] = lambda s, p=p: _fig6(p, s)
    return out


_PRESETS = _builders()
PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name: str, scale: str = "desk", **overrides) -> list[ExperimentSpec]:
    """Specs for a panel (``fig3a``) or a whole figure (``fig3``)."""
    names = [name] if name in _PRESETS else [n for n in PRESET_NAMES if n[:-1] == name]
    if not names:
        raise InputError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)} or a figure name like 'fig3'")
    return [dataclasses.replace(_PRESETS[n](scale), name=n, **overrides) for n in names]
