"""Score-variance contrasts, their variance estimators and the SV statistics."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from .errors import DegenerateVarianceError, InputError, SingularVarianceError
from .kernels import sv_matrix_batch, sv_scalar_batch
from .regression import ScoreSet

SCALAR = "scalar_sigma"
MATRIX = "matrix_Sigma"
RCOND_MIN = 1e-12


@lru_cache(maxsize=None)
def _vech_indices(k: int):
    I, J = [], []
    for j in range(k):
        for i in range(j, k):
            I.append(i)
            J.append(j)
    I = np.array(I, dtype=np.intp)
    J = np.array(J, dtype=np.intp)
    I.setflags(write=False)
    J.setflags(write=False)
    return I, J


def vech_indices(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column index of each vech position (lower triangle, by columns)."""
    if k < 1:
        raise InputError("k must be >= 1")
    return _vech_indices(int(k))


def vech(S) -> np.ndarray:
    S = np.asarray(S)
    I, J = vech_indices(S.shape[-1])
    return S[..., I, J]


def unvech(v, k: int) -> np.ndarray:
    I, J = vech_indices(k)
    out = np.zeros(np.shape(v)[:-1] + (k, k))
    out[..., I, J] = v
    out[..., J, I] = v
    return out


def elimination_matrix(k: int) -> np.ndarray:
    """``H_k`` with ``H_k @ vec(S) == vech(S)`` for symmetric ``S`` (vec is column-major)."""
    I, J = vech_indices(k)
    H = np.zeros((I.size, k * k))
    H[np.arange(I.size), I + J * k] = 1.0
    return H


def df_factors(scores: ScoreSet) -> tuple[float, float]:
    """``(m_c, m_f)``: the usual G/(G-1) * (N-1)/(N-k) corrections."""
    G, Gf, N, k = scores.G, scores.G_f, scores.N, scores.k_total
    if G < 2 or Gf < 2 or N <= k:
        raise InputError(f"df factors need G >= 2, G_f >= 2 and N > k (G={G}, G_f={Gf}, N={N}, k={k})")
    base = (N - 1) / (N - k)
    return G / (G - 1) * base, Gf / (Gf - 1) * base


def sigma_hat(scores: ScoreSet, level: str, df_factor: bool = False) -> np.ndarray:
    """Score variance matrix under coarse or fine clustering (``k1 x k1``)."""
    m_c, m_f = df_factors(scores) if df_factor else (1.0, 1.0)
    if level == "coarse":
        s = scores.coarse_sums()
        return m_c * (s.T @ s)
    if level == "fine":
        s = scores.scores
        return m_f * (s.T @ s)
    raise InputError(f"level must be 'fine' or 'coarse', got {level!r}")


def _batch(scores: ScoreSet, df_factor: bool, matrix: bool):
    m_c, m_f = df_factors(scores) if df_factor else (1.0, 1.0)
    if matrix:
        th, v = sv_matrix_batch(scores.scores[None], scores.coarse_starts, m_c, m_f)
        return th[0], v[0]
    if scores.k1 != 1:
        raise InputError(f"the scalar statistic needs k1 = 1, got k1 = {scores.k1}")
    th, v = sv_scalar_batch(scores.scores[:, 0][None], scores.coarse_starts, m_c, m_f)
    return float(th[0]), float(v[0])


def theta_contrast(scores: ScoreSet, df_factor: bool = False):
    """``sigma2_c - sigma2_f`` when ``k1 == 1``, else ``vech(Sigma_c - Sigma_f)``.

    Without df factors this is the sum of cross-products of fine scores that
    share a coarse cluster.
    """
    return _batch(scores, df_factor, matrix=scores.k1 > 1)[0]


def _require_pairs(scores: ScoreSet) -> None:
    nonzero = np.any(scores.scores != 0.0, axis=1).astype(np.intp)
    per_cluster = np.add.reduceat(nonzero, scores.coarse_starts[:-1]) if scores.G else nonzero[:0]
    if not np.any(per_cluster >= 2):
        raise DegenerateVarianceError(
            "variance of the contrast is zero: no coarse cluster holds two fine clusters "
            "with nonzero scores, so the two clusterings are indistinguishable here"
        )


def var_theta(scores: ScoreSet):
    """Estimated variance of the (unscaled) contrast: a scalar when ``k1 == 1``."""
    _require_pairs(scores)
    return _batch(scores, False, matrix=scores.k1 > 1)[1]


@dataclass(frozen=True)
class SvStatistic:
    kind: str
    value: float
    theta: object
    var_theta: object
    dof: int
    apply_df_factors: bool = False

    @property
    def q(self) -> int:
        return self.dof


def tau_sigma(scores: ScoreSet, df_factor: bool = False) -> SvStatistic:
    """Studentized contrast for a single coefficient of interest."""
    if scores.k1 != 1:
        raise InputError(f"tau_sigma needs k1 = 1, got k1 = {scores.k1}; use tau_Sigma")
    theta, v = _batch(scores, df_factor, matrix=False)
    if v == 0.0:
        raise DegenerateVarianceError(
            "variance of the contrast is zero: fine and coarse clustering are indistinguishable "
            "on this sample (every coarse cluster has at most one nonzero fine score)"
        )
    return SvStatistic(SCALAR, theta / np.sqrt(v), theta, v, 1, df_factor)


def wald_batch(theta: np.ndarray, var: np.ndarray, rcond_min: float = RCOND_MIN):
    """Quadratic forms ``theta' var^{-1} theta`` for a stack of problems.

    Returns ``(tau, rcond)``; entries whose variance fails the condition
    check come back as NaN.
    """
    theta = np.asarray(theta, dtype=float)
    var = np.asarray(var, dtype=float)
    # scale to unit diagonal first: the quadratic form is unchanged, but
    # contrasts of very different magnitudes no longer cost precision
    diag = np.diagonal(var, axis1=1, axis2=2)
    with np.errstate(divide="ignore"):
        d = np.where(diag > 0, 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0)), 0.0)
    var = var * d[:, :, None] * d[:, None, :]
    theta = theta * d
    lam = np.linalg.eigvalsh(var)
    lmax = lam[:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        rcond = np.where(lmax > 0, lam[:, 0] / lmax, 0.0)
    ok = rcond > rcond_min
    tau = np.full(theta.shape[0], np.nan)
    if np.any(ok):
        L = np.linalg.cholesky(var[ok])
        z = np.linalg.solve(L, theta[ok][..., None])[..., 0]
        tau[ok] = np.einsum("bi,bi->b", z, z)
    return tau, rcond


def tau_Sigma(scores: ScoreSet, df_factor: bool = False, rcond_min: float = RCOND_MIN) -> SvStatistic:
    """Wald statistic on all unique elements of the contrast matrix."""
    _require_pairs(scores)
    theta, v = _batch(scores, df_factor, matrix=True)
    tau, rcond = wald_batch(theta[None], v[None], rcond_min)
    if not np.isfinite(tau[0]):
        raise SingularVarianceError(
            f"variance matrix of the contrast is singular or indefinite (reciprocal condition {rcond[0]:.3g} "
            f"<= {rcond_min:g}); too few clusters for k1 = {scores.k1}?",
            float(rcond[0]),
        )
    return SvStatistic(MATRIX, float(tau[0]), theta, v, theta.size, df_factor)


TAILS = ("upper", "two_sided")


def asym_pvalue(stat: SvStatistic, tail: str = "upper") -> float:
    """Asymptotic P value: N(0,1) for tau_sigma, chi^2(q) upper tail for tau_Sigma."""
    if stat.kind == SCALAR:
        if tail == "upper":
            return float(stats.norm.sf(stat.value))
        if tail in ("two_sided", "two"):
            return float(min(1.0, 2.0 * stats.norm.sf(abs(stat.value))))
        raise InputError(f"unknown tail {tail!r} for tau_sigma")
    if stat.kind == MATRIX:
        if tail not in ("two_sided", "two", None):
            raise InputError("tau_Sigma is always referred to the chi^2 upper tail; use tail='two_sided'")
        return float(stats.chi2.sf(stat.value, stat.dof))
    raise InputError(f"unknown statistic kind {stat.kind!r}")


def compute(scores: ScoreSet, kind: str, df_factor: bool = False) -> SvStatistic:
    if kind in (SCALAR, "sigma"):
        return tau_sigma(scores, df_factor)
    if kind in (MATRIX, "Sigma"):
        return tau_Sigma(scores, df_factor)
    raise InputError(f"unknown statistic kind {kind!r}")


def normalize_kind(kind: str) -> str:
    if kind in (SCALAR, "sigma"):
        return SCALAR
    if kind in (MATRIX, "Sigma"):
        return MATRIX
    raise InputError(f"unknown statistic kind {kind!r}; expected 'sigma' or 'Sigma'")
