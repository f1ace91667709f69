"""Wild and wild cluster bootstrap P values for SV statistics.

Bootstrap samples are ``y* = v * u_hat`` with one auxiliary weight per
cluster of the draw level (the null level by default, singletons for the
ordinary wild bootstrap) and ``beta = 0``. Each sample is regressed on the
full ``X`` and the statistic recomputed from the rebuilt scores.

Weights for replication ``b`` come from a Philox stream whose key depends
on the master seed and the caller's stream id and whose counter encodes
``b``, so a replication's draws never depend on execution order.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Partition, RegressionData
from .errors import BootstrapFailure, InputError
from .kernels import sv_matrix_batch, sv_scalar_batch
from .regression import ClusterLayout, build_scores, partial_out
from .statistics import MATRIX, SCALAR, SvStatistic, compute, df_factors, normalize_kind, wald_batch

WEIGHT_DISTS = ("rademacher", "mammen", "webb6")
BOOT_TAILS = ("upper", "two_sided", "equal_tail")
ENUMERATION_LIMIT = 12
MAX_FAIL_SHARE = 0.01
_CHUNK = 256

_WEBB = np.array([-math.sqrt(1.5), -1.0, -math.sqrt(0.5), math.sqrt(0.5), 1.0, math.sqrt(1.5)])
_SQ5 = math.sqrt(5.0)
_MAMMEN_P = (_SQ5 + 1.0) / (2.0 * _SQ5)
_MAMMEN_LO = (1.0 - _SQ5) / 2.0
_MAMMEN_HI = (1.0 + _SQ5) / 2.0


class EnumerationWarning(UserWarning):
    pass


class BootstrapSizeWarning(UserWarning):
    pass


def normalize_tail(tail: str) -> str:
    t = {"two": "two_sided", "symmetric": "two_sided", "equal": "equal_tail"}.get(tail, tail)
    if t not in BOOT_TAILS:
        raise InputError(f"unknown tail {tail!r}; expected one of {BOOT_TAILS}")
    return t


@dataclass(frozen=True)
class BootstrapPlan:
    B: int = 999
    weight_dist: str = "rademacher"
    draw_level: Partition | None = None  # None: the fine (null) level
    seed: int = 0
    tail: str = "upper"
    stream: tuple = ()

    def __post_init__(self):
        if int(self.B) < 1:
            raise InputError(f"B must be >= 1, got {self.B}")
        if self.weight_dist not in WEIGHT_DISTS:
            raise InputError(f"unknown weight distribution {self.weight_dist!r}; expected one of {WEIGHT_DISTS}")
        object.__setattr__(self, "tail", normalize_tail(self.tail))
        object.__setattr__(self, "stream", tuple(int(s) for s in self.stream))

    def key(self) -> np.ndarray:
        ss = np.random.SeedSequence(int(self.seed) & ((1 << 64) - 1), spawn_key=self.stream)
        return ss.generate_state(2, np.uint64)

    def with_(self, **kw) -> "BootstrapPlan":
        d = dict(B=self.B, weight_dist=self.weight_dist, draw_level=self.draw_level,
                 seed=self.seed, tail=self.tail, stream=self.stream)
        d.update(kw)
        return BootstrapPlan(**d)


def _weights_from_raw(raw: np.ndarray, dist: str) -> np.ndarray:
    if dist == "rademacher":
        return np.where(raw >> np.uint64(63), 1.0, -1.0)
    u = (raw >> np.uint64(11)).astype(float) * (1.0 / 9007199254740992.0)
    if dist == "webb6":
        return _WEBB[np.minimum((u * 6.0).astype(np.intp), 5)]
    return np.where(u < _MAMMEN_P, _MAMMEN_LO, _MAMMEN_HI)


def _raw(key: np.ndarray, b: int, n: int) -> np.ndarray:
    counter = np.array([0, 0, b, 0], dtype=np.uint64)
    return np.random.Philox(key=key, counter=counter).random_raw(n)


def draw_weights(plan: BootstrapPlan, b: int, G: int | None = None) -> np.ndarray:
    """Auxiliary weights of replication ``b``, one per draw-level cluster."""
    if G is None:
        if plan.draw_level is None:
            raise InputError("plan has no draw level; pass G explicitly")
        G = plan.draw_level.G
    return _weights_from_raw(_raw(plan.key(), int(b), int(G)), plan.weight_dist)


def weight_matrix(plan: BootstrapPlan, G: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows ``start..stop-1`` of the ``B x G`` weight matrix."""
    stop = plan.B if stop is None else stop
    key = plan.key()
    raw = np.empty((stop - start, G), dtype=np.uint64)
    for r, b in enumerate(range(start, stop)):
        raw[r] = _raw(key, b, G)
    return _weights_from_raw(raw, plan.weight_dist)


def _fit_in_order(data: RegressionData, order: np.ndarray):
    """``partial_out`` on the rows taken in ``order``, reported in the original order,
    with ``Z`` replaced by an orthonormal basis of its column space."""
    design, fit = partial_out(data.subset(order))
    back = np.empty_like(order)
    back[order] = np.arange(order.size)
    # the statistics do not change when X1 is recombined, so work with an
    # orthonormal basis of M_{X2} X1; this keeps badly scaled regressors from
    # costing precision
    Z = np.linalg.qr(design.Z)[0][back]
    Z.setflags(write=False)
    design = dataclasses.replace(design, Z=Z, ztz_inv=np.eye(Z.shape[1]))
    fit = dataclasses.replace(fit, residuals=fit.residuals[back], leverage=fit.leverage[back],
                              q_factor=fit.q_factor[back])
    return design, fit


class SvProblem:
    """Everything needed to compute SV statistics, on the sample and in bulk
    for bootstrap samples, for one (data, fine, coarse) triple."""

    def __init__(self, data: RegressionData, fine: Partition, coarse: Partition, df_factor: bool = False):
        self.data = data
        self.fine, self.coarse = fine, coarse
        self.df_factor = df_factor
        # fit on a canonical row order (clusters by first appearance, rows by
        # content) so the statistic does not depend on labels or row shuffles
        self.layout = ClusterLayout(fine, coarse, content=np.column_stack([data.y, data.X]))
        self.design, self.fit = _fit_in_order(data, self.layout.perm)
        self.scores = build_scores(self.design, self.fit.residuals, fine, coarse, self.layout)
        self.m_c, self.m_f = df_factors(self.scores) if df_factor else (1.0, 1.0)
        self._linmaps: dict = {}

    @property
    def k1(self) -> int:
        return self.data.k1

    def statistic(self, kind: str) -> SvStatistic:
        return compute(self.scores, normalize_kind(kind), self.df_factor)

    def _draw(self, draw_level: Partition | None) -> Partition:
        d = self.fine if draw_level is None else draw_level
        if d.N != self.data.N:
            raise InputError("draw level does not cover the sample")
        return d

    # bootstrap scores -------------------------------------------------
    def scores_direct(self, V: np.ndarray, draw: Partition) -> np.ndarray:
        """Regress each ``y* = v * u_hat`` on X; return ``B x G_f x k1`` scores."""
        Q = self.fit.q_factor
        Ystar = self.fit.residuals[:, None] * V.T[draw.assignment]
        Ustar = Ystar - Q @ (Q.T @ Ystar)
        Z = self.design.Z
        out = np.empty((V.shape[0], self.layout.G_f, self.k1))
        for j in range(self.k1):
            out[:, :, j] = self.layout.aggregate(Z[:, j : j + 1] * Ustar).T
        return out

    def _linmap(self, draw: Partition) -> np.ndarray:
        key = id(draw)
        if key not in self._linmaps:
            lay, Z, Q, u = self.layout, self.design.Z, self.fit.q_factor, self.fit.residuals
            Gf, k1, D = lay.G_f, self.k1, draw.G
            fpos = lay.fine_pos_of_obs
            P = np.zeros((Gf, k1, D))
            np.add.at(P, (fpos, slice(None), draw.assignment), Z * u[:, None])
            Cq = np.stack([lay.aggregate(Z[:, j : j + 1] * Q) for j in range(k1)], axis=1)  # Gf x k1 x k
            Aq = np.zeros((D, Q.shape[1]))
            np.add.at(Aq, draw.assignment, Q * u[:, None])
            self._linmaps[key] = (draw, (P - Cq @ Aq.T).reshape(Gf * k1, D))
        return self._linmaps[key][1]

    def scores_linmap(self, V: np.ndarray, draw: Partition) -> np.ndarray:
        """Same as :meth:`scores_direct` through the exact linear map ``s* = M v``."""
        M = self._linmap(draw)
        return (V @ M.T).reshape(V.shape[0], self.layout.G_f, self.k1)

    def bootstrap_scores(self, V: np.ndarray, draw: Partition, method: str = "auto") -> np.ndarray:
        if method == "auto":
            lin = self.layout.G_f * self.k1 * draw.G
            direct = self.data.N * (2 * self.data.k + self.k1)
            method = "linmap" if lin < direct else "direct"
        if method == "linmap":
            return self.scores_linmap(V, draw)
        if method == "direct":
            return self.scores_direct(V, draw)
        raise InputError(f"unknown method {method!r}")

    def batch_statistics(self, S: np.ndarray, kind: str) -> np.ndarray:
        """SV statistics for a stack of score sets; NaN marks a failed replication."""
        starts = self.layout.coarse_starts
        if kind == SCALAR:
            th, v = sv_scalar_batch(S[:, :, 0], starts, self.m_c, self.m_f)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(v > 0.0, th / np.sqrt(v), np.nan)
        th, v = sv_matrix_batch(S, starts, self.m_c, self.m_f)
        return wald_batch(th, v)[0]


@dataclass
class BootstrapResult:
    p_value: float
    tau: float
    tau_star: np.ndarray | None
    critical_values: dict
    n_exceed: int
    B: int
    n_failed: int = 0
    kind: str = SCALAR
    tail: str = "upper"
    warnings: list = field(default_factory=list)

    @property
    def B_effective(self) -> int:
        return self.B - self.n_failed


def bootstrap_critical_value(tau_star, alpha: float) -> float:
    """Element ``(1 - alpha)(B + 1)`` (1-based) of the sorted bootstrap statistics."""
    t = np.sort(np.asarray(tau_star, dtype=float))
    B = t.size
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    need = math.ceil(1.0 / alpha - 1.0 - 1e-9)
    if B < need:
        raise InputError(f"B = {B} is too small for alpha = {alpha} (need B >= {need})")
    pos = (1.0 - alpha) * (B + 1)
    near = round(pos)
    if abs(pos - near) < 1e-9:
        idx = int(near)
    else:
        idx = int(math.floor(pos))
        warnings.warn(
            f"(1 - alpha)(B + 1) = {pos:.4g} is not an integer; using element {idx}", BootstrapSizeWarning, stacklevel=2
        )
    if idx < 1 or idx > B:
        raise InputError(f"B = {B} is too small for alpha = {alpha} (need B >= {math.ceil(1 / alpha - 1)})")
    return float(t[idx - 1])


def bootstrap_pvalue(tau: float, tau_star, tail: str = "upper", kind: str = SCALAR) -> tuple[float, int]:
    """P value and exceedance count; ties never count as exceedances."""
    ts = np.asarray(tau_star, dtype=float)
    B = ts.size
    tail = normalize_tail(tail)
    if kind == MATRIX:
        if tail == "equal_tail":
            raise InputError("equal-tail P values are not defined for tau_Sigma")
        n = int(np.sum(ts > tau))
        return n / B, n
    if tail == "upper":
        n = int(np.sum(ts > tau))
        return n / B, n
    if tail == "two_sided":
        n = int(np.sum(np.abs(ts) > abs(tau)))
        return n / B, n
    lo = int(np.sum(ts <= tau))
    hi = int(np.sum(ts >= tau))
    n = min(lo, hi)
    return min(1.0, 2.0 * n / B), n


def _check_plan(plan: BootstrapPlan, draw: Partition, alphas) -> list[str]:
    notes = []
    if plan.weight_dist == "rademacher" and draw.G <= ENUMERATION_LIMIT:
        msg = (
            f"only {draw.G} draw-level clusters: Rademacher weights give just {2 ** draw.G} distinct "
            "bootstrap samples; consider weight_dist='webb6'"
        )
        warnings.warn(msg, EnumerationWarning, stacklevel=3)
        notes.append(msg)
    for a in alphas:
        pos = (1.0 - a) * (plan.B + 1)
        if abs(pos - round(pos)) > 1e-9:
            msg = f"(1 - {a})(B + 1) = {pos:.4g} is not an integer; choose B like 199, 399 or 999"
            warnings.warn(msg, BootstrapSizeWarning, stacklevel=3)
            notes.append(msg)
    return notes


def bootstrap_many(
    problem: SvProblem,
    plan: BootstrapPlan,
    tests,
    alphas=(0.05,),
    keep_tau_star: bool = True,
    method: str = "auto",
    warn: bool = True,
    threads: int = 1,
) -> list[BootstrapResult]:
    """Run several (kind, tail) tests off one set of bootstrap samples.

    Replications are processed in chunks; with ``threads > 1`` chunks run
    concurrently and write disjoint slices, so results do not depend on
    the thread count.
    """
    tests = [(normalize_kind(k), normalize_tail(t)) for k, t in tests]
    draw = problem._draw(plan.draw_level)
    notes = _check_plan(plan, draw, alphas) if warn else []
    kinds = list(dict.fromkeys(k for k, _ in tests))
    taus = {k: problem.statistic(k).value for k in kinds}
    star = {k: np.empty(plan.B) for k in kinds}

    def chunk(start):
        stop = min(plan.B, start + _CHUNK)
        V = weight_matrix(plan, draw.G, start, stop)
        S = problem.bootstrap_scores(V, draw, method)
        for k in kinds:
            star[k][start:stop] = problem.batch_statistics(S, k)

    starts = range(0, plan.B, _CHUNK)
    if threads > 1 and len(starts) > 1:
        if method != "direct":
            problem._linmap(draw)  # build the cached map before workers race for it
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(chunk, starts))
    else:
        for start in starts:
            chunk(start)
    out = []
    for kind, tail in tests:
        ts = star[kind]
        failed = ~np.isfinite(ts)
        n_failed = int(failed.sum())
        if n_failed > MAX_FAIL_SHARE * plan.B:
            raise BootstrapFailure(
                f"{n_failed} of {plan.B} bootstrap replications had a degenerate or singular variance "
                f"(limit {MAX_FAIL_SHARE:.0%}); the clustering structure is too thin for this test",
                n_failed, plan.B,
            )
        good = ts[~failed]
        p, n = bootstrap_pvalue(taus[kind], good, tail, kind)
        crit = {}
        if good.size:
            ref = np.abs(good) if (tail == "two_sided" and kind == SCALAR) else good
            for a in alphas:
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", BootstrapSizeWarning)
                        if tail == "equal_tail":
                            crit[a] = (
                                -bootstrap_critical_value(-good, a / 2),
                                bootstrap_critical_value(good, a / 2),
                            )
                        else:
                            crit[a] = bootstrap_critical_value(ref, a)
                except InputError:
                    pass
        res_notes = list(notes)
        if n_failed:
            res_notes.append(f"{n_failed} failed replications dropped")
        out.append(BootstrapResult(p, float(taus[kind]), ts if keep_tau_star else None, crit, n, plan.B,
                                   n_failed, kind, tail, res_notes))
    return out


def bootstrap_test(
    data: RegressionData,
    fine: Partition,
    coarse: Partition,
    stat_kind: str,
    plan: BootstrapPlan,
    df_factor: bool = False,
    alphas=(0.05,),
    keep_tau_star: bool = True,
) -> BootstrapResult:
    """Bootstrap P value for testing fine against coarse clustering."""
    problem = SvProblem(data, fine, coarse, df_factor)
    return bootstrap_many(problem, plan, [(stat_kind, plan.tail)], alphas, keep_tau_star)[0]
