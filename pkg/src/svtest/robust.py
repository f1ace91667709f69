"""Heteroskedasticity- and cluster-robust variance estimators for the
coefficients of interest, and the pre-test interval built from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .bootstrap import BootstrapPlan, SvProblem, bootstrap_many
from .data import Partition, RegressionData
from .errors import InputError, LeverageError, RankDeficientError
from .regression import OlsFit, partial_out
from .statistics import SCALAR, asym_pvalue

ESTIMATORS = ("HC1", "HC3", "CV1", "CV3")
_LEVERAGE_TOL = 1e-10
_RCOND_MIN = 1e-13
_NULL_TOL = 1e-10


def _chol_rcond(c: np.ndarray) -> float:
    d = np.abs(np.diag(c))
    return float((d.min() / d.max()) ** 2) if d.max() > 0 else 0.0


@dataclass(frozen=True)
class RobustVariance:
    estimator: str
    level: str | None
    vcov: np.ndarray

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))


@dataclass(frozen=True)
class PretestInterval:
    chosen_level: str  # "fine" or "coarse"
    pretest_p: float
    alpha_pretest: float
    interval: tuple
    se_used: float
    beta_hat: float = float("nan")
    se_fine: float = float("nan")
    se_coarse: float = float("nan")
    statistic: float = float("nan")


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def cv1_from_scores(scores: np.ndarray, ztz_inv: np.ndarray, m: float = 1.0) -> np.ndarray:
    """Sandwich ``(Z'Z)^{-1} [m sum_g s_g s_g'] (Z'Z)^{-1}`` from cluster scores (``G x k1``)."""
    s = np.atleast_2d(np.asarray(scores, dtype=float))
    return _sym(ztz_inv @ (m * (s.T @ s)) @ ztz_inv)


def _level_scores(data: RegressionData, level: Partition, Z: np.ndarray, u: np.ndarray) -> np.ndarray:
    s = np.zeros((level.G, Z.shape[1]))
    np.add.at(s, level.assignment, Z * u[:, None])
    return s


def cv1(data: RegressionData, level: Partition) -> RobustVariance:
    """CV1 with ``m = G/(G-1) (N-1)/(N-k)``; singleton clusters give HC1."""
    if level.G < 2:
        raise InputError("CV1 needs at least two clusters")
    design, fit = partial_out(data)
    N, k, G = data.N, data.k, level.G
    m = G / (G - 1) * (N - 1) / (N - k)
    V = cv1_from_scores(_level_scores(data, level, design.Z, fit.residuals), design.ztz_inv, m)
    return RobustVariance("HC1" if level.is_singletons else "CV1", level.name, V)


def hc1(data: RegressionData) -> RobustVariance:
    return cv1(data, Partition.singletons(data.N))


def hc3(data: RegressionData, fit: OlsFit | None = None) -> RobustVariance:
    """HC3: each squared residual inflated by ``(1 - h_i)^{-2}``."""
    design, full = partial_out(data)
    fit = fit or full
    h = fit.leverage
    bad = np.flatnonzero(h >= 1.0 - _LEVERAGE_TOL)
    if bad.size:
        i = int(bad[0])
        raise LeverageError(f"observation {i} has leverage {h[i]:.12g}: it is fitted perfectly, HC3 is undefined", i)
    e = fit.residuals / (1.0 - h)
    Z = design.Z
    meat = (Z * (e * e)[:, None]).T @ Z
    V = _sym(design.ztz_inv @ meat @ design.ztz_inv)
    return RobustVariance("HC3", "none", V)


def _shift(A: np.ndarray, rhs: np.ndarray, k1: int) -> np.ndarray | None:
    """X1 block of ``-A^{-1} rhs``; with singular ``A`` the X1 block is still
    unique when the null space of ``A`` has no X1 component."""
    try:
        c = linalg.cho_factor(A, check_finite=False)
        if _chol_rcond(c[0]) > _RCOND_MIN:
            return -linalg.cho_solve(c, rhs, check_finite=False)[:k1]
    except linalg.LinAlgError:
        pass
    w, vec = linalg.eigh(A)
    null = w <= _NULL_TOL * max(w[-1], 0.0)
    if np.abs(vec[:k1, null]).max(initial=0.0) > 1e-6:
        return None
    V = vec[:, ~null]
    return -(V @ ((V.T @ rhs) / w[~null]))[:k1]


def jackknife_shifts(data: RegressionData, level: Partition, fit: OlsFit | None = None) -> np.ndarray:
    """X1 block of ``beta^(g) - beta`` for every cluster ``g`` (``G x k1``).

    Uses ``beta^(g) - beta = -(X'X - X_g'X_g)^{-1} X_g' u_g``. Deleting a
    cluster can make nuisance columns degenerate (its own fixed-effect dummy
    becomes zero; deleting the base category makes the intercept collinear
    with the other dummies). The X1 block is still identified in those
    cases and is what we return; losing identification of X1 itself is an
    error naming the cluster.
    """
    X = data.X
    if fit is None:
        _, fit = partial_out(data)
    u = fit.residuals
    k1 = data.k1
    XtX = X.T @ X
    out = np.empty((level.G, k1))
    support = np.zeros((level.G, data.k), dtype=np.intp)
    np.add.at(support, level.assignment, (X != 0.0).astype(np.intp))
    total = support.sum(axis=0)
    for g, idx in enumerate(level.cluster_index):
        Xg = X[idx]
        live = support[g] < total
        d = None
        if live[:k1].all():
            cols = np.flatnonzero(live)
            A = (XtX - Xg.T @ Xg)[np.ix_(cols, cols)]
            d = _shift(A, (Xg.T @ u[idx])[cols], k1)
        if d is None:
            raise RankDeficientError(
                f"refit without {level.name} cluster {level.labels[g]!r} is infeasible: "
                "the coefficients of interest are not identified on the remaining sample", None
            )
        out[g] = d
    return out


def cv3(data: RegressionData, level: Partition, fit: OlsFit | None = None) -> RobustVariance:
    """Cluster jackknife ``(G-1)/G sum_g (beta^(g)-beta)(beta^(g)-beta)'`` for the X1 block."""
    if level.G < 2:
        raise InputError("CV3 needs at least two clusters")
    D = jackknife_shifts(data, level, fit)
    G = level.G
    V = _sym((G - 1) / G * (D.T @ D))
    return RobustVariance("CV3", level.name, V)


def pretest_se(
    data: RegressionData,
    fine: Partition,
    coarse: Partition,
    alpha_pretest: float = 0.20,
    tail: str = "upper",
    engine: str = "asymptotic",
    plan: BootstrapPlan | None = None,
    alpha: float = 0.05,
) -> PretestInterval:
    """Pick CV3 at the coarse level if the SV pre-test of fine against coarse
    rejects, else CV3 at the fine level (HC3 for singletons); return the
    normal-quantile interval for the single coefficient of interest."""
    if data.k1 != 1:
        raise InputError(f"the pre-test interval needs one coefficient of interest, got k1 = {data.k1}")
    problem = SvProblem(data, fine, coarse)
    if engine == "asymptotic":
        stat = problem.statistic(SCALAR)
        tau, p = stat.value, asym_pvalue(stat, tail)
    elif engine == "bootstrap":
        base = plan or BootstrapPlan()
        res = bootstrap_many(problem, base.with_(draw_level=base.draw_level or fine, tail=tail), [(SCALAR, tail)],
                             keep_tau_star=False)[0]
        tau, p = res.tau, res.p_value
    else:
        raise InputError(f"unknown engine {engine!r}")
    fit = problem.fit
    se_f = float((hc3(data, fit) if fine.is_singletons else cv3(data, fine, fit)).se[0])
    se_c = float(cv3(data, coarse, fit).se[0])
    reject = p < alpha_pretest
    se = se_c if reject else se_f
    b = float(fit.beta_hat[0])
    z = float(stats.norm.ppf(1.0 - alpha / 2.0))
    return PretestInterval("coarse" if reject else "fine", float(p), alpha_pretest, (b - z * se, b + z * se), se,
                           b, se_f, se_c, float(tau))
