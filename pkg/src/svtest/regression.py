"""OLS, partialing out, empirical scores and delete-one-cluster refits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .data import Partition, RegressionData, validate_nesting
from .errors import InputError, NestingError, RankDeficientError
from .kernels import group_sums


@dataclass(frozen=True)
class OlsFit:
    beta_hat: np.ndarray
    residuals: np.ndarray
    xtx_inv: np.ndarray
    leverage: np.ndarray
    q_factor: np.ndarray = field(repr=False)  # orthonormal basis of col(X), N x k

    @property
    def k(self) -> int:
        return self.beta_hat.size


def _pivoted_qr(X: np.ndarray):
    N, k = X.shape
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = np.finfo(float).eps * max(N, k) * (d[0] if k else 0.0)
    rank = int(np.sum(d > tol))
    return Q, R, piv, rank


def ols(X, y) -> OlsFit:
    """Least squares via a column-pivoted QR decomposition.

    Raises :class:`RankDeficientError` naming the first column the pivoting
    found to be linearly dependent on the others.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise InputError(f"X has shape {X.shape}, y has {y.size} rows")
    N, k = X.shape
    if N <= k:
        raise InputError(f"need N > k (N={N}, k={k})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InputError("non-finite values in X or y")
    Q, R, piv, rank = _pivoted_qr(X)
    if rank < k:
        col = int(piv[rank])
        raise RankDeficientError(f"regressor matrix is rank deficient: column {col} is collinear", col)
    qty = Q.T @ y
    beta = np.empty(k)
    beta[piv] = linalg.solve_triangular(R, qty)
    resid = y - Q @ qty
    Rinv = linalg.solve_triangular(R, np.eye(k))
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = Rinv @ Rinv.T
    leverage = np.einsum("ij,ij->i", Q, Q)
    return OlsFit(beta, resid, xtx_inv, leverage, Q)


@dataclass(frozen=True)
class PartialedDesign:
    """``Z = M_{X2} X1`` together with the total coefficient count used in
    degrees-of-freedom corrections."""

    Z: np.ndarray
    k_total: int
    ztz_inv: np.ndarray = field(repr=False)

    @property
    def k1(self) -> int:
        return self.Z.shape[1]


def partial_out(data: RegressionData) -> tuple[PartialedDesign, OlsFit]:
    """Project X2 off X1 and fit the full model ``y ~ [X1, X2]``."""
    try:
        full = ols(data.X, data.y)
    except RankDeficientError as exc:
        names = data.x1_names + data.x2_names
        raise RankDeficientError(
            f"[X1, X2] is rank deficient: {names[exc.column]!r} is collinear with the other regressors",
            exc.column,
        ) from None
    if data.k2:
        Q2, _, _, _ = _pivoted_qr(data.X2)
        Z = data.X1 - Q2 @ (Q2.T @ data.X1)
    else:
        Z = data.X1.copy()
    _, Rz, piv, rank = _pivoted_qr(Z)
    scale = np.linalg.norm(data.X1, 2)
    if rank < data.k1 or np.abs(Rz[-1, -1]) <= 1e-12 * max(scale, 1.0):
        col = int(piv[min(rank, data.k1 - 1)])
        raise RankDeficientError(
            f"regressor of interest {data.x1_names[col]!r} is collinear with X2", col
        )
    Z.setflags(write=False)
    ztz_inv = full.xtx_inv[: data.k1, : data.k1].copy()
    return PartialedDesign(Z, data.k, ztz_inv), full


class ClusterLayout:
    """Index bookkeeping for a fine/coarse pair.

    Coarse clusters, and fine clusters within each, are ordered by first
    appearance in the data, so renaming labels never changes the layout.
    ``coarse_starts`` delimits the fine clusters of each coarse cluster and
    ``fine_starts`` the observations (after permuting by ``perm``) of each
    fine cluster. Given ``content`` (one row per observation), rows inside a
    fine cluster are sorted by it, which makes the order independent of how
    the rows of a cluster were shuffled.
    """

    def __init__(self, fine: Partition, coarse: Partition, content: np.ndarray | None = None):
        ok, v = validate_nesting(fine, coarse)
        if not ok:
            raise NestingError(f"{fine.name!r} is not nested in {coarse.name!r}: " + v.describe(fine.name, coarse.name), v)
        self.fine, self.coarse = fine, coarse
        first = np.array([idx[0] for idx in fine.cluster_index], dtype=np.intp)
        coarse_first = np.array([idx[0] for idx in coarse.cluster_index], dtype=np.intp)
        self.coarse_order = np.argsort(coarse_first, kind="stable").astype(np.intp)
        coarse_rank = np.empty(coarse.G, dtype=np.intp)
        coarse_rank[self.coarse_order] = np.arange(coarse.G)
        rank_of_fine = coarse_rank[coarse.assignment[first]]
        fine_order = np.lexsort((first, rank_of_fine))
        self.fine_order = fine_order
        self.pos_of_fine = np.empty(fine.G, dtype=np.intp)
        self.pos_of_fine[fine_order] = np.arange(fine.G)
        self.coarse_starts = np.searchsorted(rank_of_fine[fine_order], np.arange(coarse.G + 1)).astype(np.intp)
        self.fine_pos_of_obs = self.pos_of_fine[fine.assignment]
        if content is None:
            self.perm = np.argsort(self.fine_pos_of_obs, kind="stable").astype(np.intp)
        else:
            c = np.asarray(content, dtype=float).reshape(fine.N, -1)
            self.perm = np.lexsort((*c.T[::-1], self.fine_pos_of_obs)).astype(np.intp)
        self.fine_starts = np.searchsorted(self.fine_pos_of_obs[self.perm], np.arange(fine.G + 1)).astype(np.intp)

    @property
    def G(self) -> int:
        return self.coarse.G

    @property
    def G_f(self) -> int:
        return self.fine.G

    @property
    def N(self) -> int:
        return self.fine.N

    def aggregate(self, values: np.ndarray) -> np.ndarray:
        """Sum rows of an ``N x m`` array within fine clusters (ordered)."""
        v = np.ascontiguousarray(values[self.perm], dtype=float)
        return group_sums(v, self.fine_starts)


@dataclass(frozen=True)
class ScoreSet:
    """Fine-cluster scores ``s_gh`` (rows, ordered coarse-then-fine).

    ``coarse_starts[g]:coarse_starts[g+1]`` selects the fine clusters inside
    coarse cluster ``g``.
    """

    scores: np.ndarray
    coarse_starts: np.ndarray
    N: int
    k_total: int
    fine_labels: tuple = ()
    coarse_labels: tuple = ()

    @property
    def k1(self) -> int:
        return self.scores.shape[1]

    @property
    def G(self) -> int:
        return self.coarse_starts.size - 1

    @property
    def G_f(self) -> int:
        return self.scores.shape[0]

    @property
    def M(self) -> np.ndarray:
        return np.diff(self.coarse_starts)

    def groups(self) -> list[np.ndarray]:
        cs = self.coarse_starts
        return [self.scores[cs[g] : cs[g + 1]] for g in range(self.G)]

    def coarse_sums(self) -> np.ndarray:
        return group_sums(np.ascontiguousarray(self.scores), self.coarse_starts)

    @classmethod
    def from_groups(cls, groups, N: int | None = None, k_total: int | None = None) -> "ScoreSet":
        """Build directly from per-coarse-cluster lists of fine scores (handy in tests)."""
        arrs = []
        for g in groups:
            a = np.asarray(g, dtype=float)
            arrs.append(a[:, None] if a.ndim == 1 else a)
        scores = np.vstack(arrs)
        starts = np.concatenate([[0], np.cumsum([a.shape[0] for a in arrs])]).astype(np.intp)
        n = scores.shape[0] if N is None else N
        k = scores.shape[1] if k_total is None else k_total
        return cls(scores, starts, n, k)


def build_scores(Z, residuals, fine: Partition, coarse: Partition, layout: ClusterLayout | None = None) -> ScoreSet:
    """Fine-cluster sums of ``Z_i * u_i`` grouped by coarse cluster."""
    k_total = Z.k_total if isinstance(Z, PartialedDesign) else None
    Zm = Z.Z if isinstance(Z, PartialedDesign) else np.asarray(Z, dtype=float)
    if Zm.ndim == 1:
        Zm = Zm[:, None]
    u = np.asarray(residuals, dtype=float).reshape(-1)
    if Zm.shape[0] != u.size or fine.N != u.size or coarse.N != u.size:
        raise InputError(f"length mismatch: Z {Zm.shape[0]}, residuals {u.size}, partitions {fine.N}/{coarse.N}")
    if layout is None:
        layout = ClusterLayout(fine, coarse)
    s = layout.aggregate(Zm * u[:, None])
    return ScoreSet(
        s,
        layout.coarse_starts,
        u.size,
        Zm.shape[1] if k_total is None else k_total,
        tuple(fine.labels[h] for h in layout.fine_order),
        tuple(coarse.labels[g] for g in layout.coarse_order),
    )


def delete_cluster_fit(
    data: RegressionData,
    level: Partition,
    omit: int,
    drop_empty_nuisance: bool = False,
) -> np.ndarray:
    """OLS coefficients (X1 then X2) on the sample without cluster ``omit``.

    A fixed-effect dummy that is identically zero once the cluster is removed
    (or an intercept that becomes collinear with the remaining dummies) makes
    the refit rank deficient. By default that is an error; with
    ``drop_empty_nuisance`` the X1 block is computed by partialing out the
    span of the remaining X2 columns and the X2 coefficients are reported as
    NaN whenever X2 lost rank.
    """
    if level.N != data.N:
        raise InputError("partition length does not match the data")
    if not 0 <= omit < level.G:
        raise InputError(f"cluster id {omit} out of range 0..{level.G - 1}")
    keep = level.assignment != omit
    X = data.X[keep]
    y = data.y[keep]
    where = f"refit without {level.name} cluster {level.labels[omit]!r} is infeasible"
    try:
        return ols(X, y).beta_hat
    except (RankDeficientError, InputError) as exc:
        if not drop_empty_nuisance:
            raise RankDeficientError(f"{where}: {exc}", getattr(exc, "column", None)) from None
    X1, X2 = X[:, : data.k1], X[:, data.k1 :]
    if X2.shape[1]:
        Q2, _, _, r = _pivoted_qr(X2)
        Q2 = Q2[:, :r]
        Z = X1 - Q2 @ (Q2.T @ X1)
    else:
        Z = X1
    _, _, _, rz = _pivoted_qr(Z)
    if rz < data.k1 or Z.shape[0] <= data.k1:
        raise RankDeficientError(f"{where}: the coefficients of interest are not identified", None)
    beta = np.full(data.k, np.nan)
    beta[: data.k1] = linalg.lstsq(Z, y)[0]
    return beta
