"""Choosing the clustering level by testing adjacent levels from finest upward."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bootstrap import BootstrapPlan, SvProblem, bootstrap_many
from .data import ClusterNesting, RegressionData
from .errors import InputError, SequentialAbort, SvTestError
from .statistics import SCALAR, asym_pvalue, normalize_kind

ENGINES = ("asymptotic", "bootstrap")


@dataclass(frozen=True)
class StepResult:
    m: int
    fine: str
    coarse: str
    statistic: float
    p_value: float
    rejected: bool


@dataclass
class SequentialResult:
    m_hat: int
    per_step: list
    alpha: float
    stat_kind: str
    engine: str
    level_names: tuple = ()
    m_hat_min: int | None = None
    extra_steps: list = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.level_names) - 1

    @property
    def level(self) -> str:
        return self.level_names[self.m_hat] if self.level_names else str(self.m_hat)


def select_level(pvalues, alpha: float) -> int:
    """Index of the first non-rejected step, or ``len(pvalues)`` if all reject."""
    for m, pv in enumerate(pvalues):
        if not pv < alpha:
            return m
    return len(pvalues)


def min_nonrejected(rejected, p: int) -> int:
    """Smallest ``m`` in ``0..p`` whose test of level m against m+1 does not
    reject; level ``p`` has no test above it and always qualifies."""
    candidates = [m for m in range(p + 1) if m == p or (m < len(rejected) and not rejected[m])]
    return min(candidates)


StepEngine = Callable[[int, RegressionData, object, object], tuple]


def _engine(kind: str, engine: str, plan: BootstrapPlan | None, tail: str, df_factor: bool) -> StepEngine:
    if engine == "asymptotic":
        def run(m, data, fine, coarse):
            problem = SvProblem(data, fine, coarse, df_factor)
            stat = problem.statistic(kind)
            return stat.value, asym_pvalue(stat, tail)
        return run
    if engine == "bootstrap":
        base = plan or BootstrapPlan()

        def run(m, data, fine, coarse):
            step_plan = base.with_(draw_level=fine, stream=base.stream + (m,), tail=tail)
            problem = SvProblem(data, fine, coarse, df_factor)
            res = bootstrap_many(problem, step_plan, [(kind, tail)], keep_tau_star=False)[0]
            return res.tau, res.p_value
        return run
    raise InputError(f"unknown engine {engine!r}; expected one of {ENGINES}")


def sequential_select(
    data: RegressionData,
    nesting: ClusterNesting,
    stat_kind: str = "sigma",
    alpha: float = 0.05,
    engine: str | StepEngine = "bootstrap",
    plan: BootstrapPlan | None = None,
    tail: str = "upper",
    df_factor: bool = False,
    run_all: bool = False,
) -> SequentialResult:
    """Test level m against m+1 for m = 0, 1, ... and stop at the first
    non-rejection; if every test rejects the coarsest level is chosen.

    ``engine`` may be a callable ``(m, data, fine, coarse) -> (stat, p)``.
    With ``run_all`` the tests above the stopping point are also run (and
    kept in ``extra_steps``) so the min-over-non-rejected characterization
    can be checked against the full set of decisions.
    """
    if nesting.p < 1:
        raise InputError("sequential selection needs at least two clustering levels")
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    kind = normalize_kind(stat_kind)
    if kind == SCALAR and data.k1 != 1:
        raise InputError(f"tau_sigma needs one regressor of interest, got k1 = {data.k1}")
    engine_name = engine if isinstance(engine, str) else "custom"
    if kind != SCALAR and tail == "upper":
        tail = "two_sided"  # the Wald statistic has a single rejection region
    run = engine if callable(engine) else _engine(kind, engine, plan, tail, df_factor)

    trail, extra, decided = [], [], None
    for m in range(nesting.p):
        fine, coarse = nesting[m], nesting[m + 1]
        try:
            stat, pv = run(m, data, fine, coarse)
        except SvTestError as exc:
            if decided is not None:
                break
            raise SequentialAbort(
                f"test of {fine.name!r} against {coarse.name!r} failed: {exc}", list(trail), exc
            ) from exc
        step = StepResult(m, fine.name, coarse.name, float(stat), float(pv), bool(pv < alpha))
        (trail if decided is None else extra).append(step)
        if decided is None and not step.rejected:
            decided = m
            if not run_all:
                break
    m_hat = nesting.p if decided is None else decided
    rejected = [s.rejected for s in trail + extra]
    m_min = min_nonrejected(rejected, nesting.p) if (run_all or decided is None) else min_nonrejected(
        [s.rejected for s in trail], nesting.p
    )
    if m_min != m_hat:  # pragma: no cover - would mean the loop is wrong
        raise AssertionError(f"sequential loop chose {m_hat}, min characterization {m_min}")
    return SequentialResult(m_hat, trail, alpha, kind, engine_name, tuple(nesting.names), m_min, extra)


def sequential_from_pvalues(pvalues, alpha: float) -> tuple[int, int]:
    """Loop and min-characterization choices for a fixed vector of step P values."""
    pv = np.asarray(pvalues, dtype=float)
    return select_level(pv, alpha), min_nonrejected(list(pv < alpha), pv.size)
