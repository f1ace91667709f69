"""Pure numpy versions of the hot kernels. Used when the extension is absent."""

from __future__ import annotations

import numpy as np


def group_sums(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    G = starts.size - 1
    if G == 0:
        return np.zeros((0,) + values.shape[1:])
    if np.all(np.diff(starts) > 0):
        return np.add.reduceat(values, starts[:-1], axis=0)
    csum = np.concatenate([np.zeros((1,) + values.shape[1:]), np.cumsum(values, axis=0)])
    return csum[starts[1:]] - csum[starts[:-1]]


def _segsum(a: np.ndarray, starts: np.ndarray) -> np.ndarray:
    # sums along axis 1 over coarse segments; segments are never empty here
    return np.add.reduceat(a, starts[:-1], axis=1)


def sv_scalar_batch(S: np.ndarray, starts: np.ndarray, m_c: float, m_f: float):
    c = _segsum(S, starts)
    s2 = S * S
    q = _segsum(s2, starts)
    r = _segsum(s2 * s2, starts)
    if m_c == 1.0 and m_f == 1.0:
        theta = np.sum(c * c - q, axis=1)
    else:
        theta = m_c * np.sum(c * c, axis=1) - m_f * np.sum(q, axis=1)
    var = 2.0 * np.sum(q * q - r, axis=1)
    return theta, var


def sv_matrix_batch(S: np.ndarray, starts: np.ndarray, m_c: float, m_f: float, I: np.ndarray, J: np.ndarray):
    # S is B x G_f x k1; vech position p <-> (I[p], J[p]) with I >= J
    w = S[:, :, I] * S[:, :, J]                      # vech(s s') per fine cluster
    A = _segsum(w, starts)                           # vech(A_g), B x G x q
    C = _segsum(S, starts)                           # coarse sums, B x G x k1
    cc = C[:, :, I] * C[:, :, J]
    if m_c == 1.0 and m_f == 1.0:
        theta = np.sum(cc - A, axis=1)
    else:
        theta = m_c * np.sum(cc, axis=1) - m_f * np.sum(A, axis=1)
    k1 = S.shape[2]
    full = np.zeros(A.shape[:2] + (k1, k1))
    full[:, :, I, J] = A
    full[:, :, J, I] = A
    # (A kron A) sandwiched by the pseudo-inverse of the duplication matrix,
    # which averages the two orderings of each off-diagonal pair
    t1 = 0.5 * (full[:, :, J[:, None], J[None, :]] * full[:, :, I[:, None], I[None, :]]
                + full[:, :, J[:, None], I[None, :]] * full[:, :, I[:, None], J[None, :]])
    t2 = _segsum(w[:, :, :, None] * w[:, :, None, :], starts)
    var = 2.0 * np.sum(t1 - t2, axis=1)
    return theta, var
