# cython: language_level=3
"""Compiled kernels: fine-cluster aggregation and batched score-variance sums."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

ctypedef cnp.intp_t intp


cdef inline void _neumaier(double x, double* acc, double* comp) noexcept nogil:
    cdef double t = acc[0] + x
    if fabs(acc[0]) >= fabs(x):
        comp[0] += (acc[0] - t) + x
    else:
        comp[0] += (x - t) + acc[0]
    acc[0] = t


def group_sums(const double[:, ::1] values, const intp[::1] starts):
    cdef Py_ssize_t G = starts.shape[0] - 1
    cdef Py_ssize_t m = values.shape[1]
    cdef Py_ssize_t g, i, j
    out = np.zeros((G, m))
    cdef double[:, ::1] o = out
    with nogil:
        for g in range(G):
            for i in range(starts[g], starts[g + 1]):
                for j in range(m):
                    o[g, j] += values[i, j]
    return out


def sv_scalar_batch(const double[:, ::1] S, const intp[::1] starts, double m_c, double m_f):
    cdef Py_ssize_t B = S.shape[0]
    cdef Py_ssize_t G = starts.shape[0] - 1
    cdef Py_ssize_t b, g, h
    cdef double s, s2, c, q, r, rc, tacc, tcmp, vacc, vcmp, cacc, ccmp, facc, fcmp
    cdef bint plain = (m_c == 1.0 and m_f == 1.0)
    theta = np.empty(B)
    var = np.empty(B)
    cdef double[::1] th = theta
    cdef double[::1] vv = var
    with nogil:
        for b in range(B):
            tacc = 0.0; tcmp = 0.0; vacc = 0.0; vcmp = 0.0
            cacc = 0.0; ccmp = 0.0; facc = 0.0; fcmp = 0.0
            for g in range(G):
                c = 0.0; q = 0.0; r = 0.0; rc = 0.0
                for h in range(starts[g], starts[g + 1]):
                    s = S[b, h]
                    s2 = s * s
                    c += s
                    q += s2
                    _neumaier(s2 * s2, &r, &rc)
                if plain:
                    _neumaier(c * c - q, &tacc, &tcmp)
                else:
                    _neumaier(c * c, &cacc, &ccmp)
                    _neumaier(q, &facc, &fcmp)
                _neumaier(q * q - (r + rc), &vacc, &vcmp)
            if plain:
                th[b] = tacc + tcmp
            else:
                th[b] = m_c * (cacc + ccmp) - m_f * (facc + fcmp)
            vv[b] = 2.0 * (vacc + vcmp)
    return theta, var


def sv_matrix_batch(const double[:, :, ::1] S, const intp[::1] starts, double m_c, double m_f,
                    const intp[::1] I, const intp[::1] J):
    cdef Py_ssize_t B = S.shape[0]
    cdef Py_ssize_t k1 = S.shape[2]
    cdef Py_ssize_t q = I.shape[0]
    cdef Py_ssize_t G = starts.shape[0] - 1
    cdef Py_ssize_t b, g, h, a, p, p2
    cdef bint plain = (m_c == 1.0 and m_f == 1.0)
    theta = np.empty((B, q))
    var = np.empty((B, q, q))
    cdef double[:, ::1] th = theta
    cdef double[:, :, ::1] vv = var
    A_ = np.empty((k1, k1))
    C_ = np.empty(k1)
    w_ = np.empty(q)
    T2_ = np.empty((q, q))
    tacc_ = np.empty(q)
    vacc_ = np.empty((q, q))
    cdef double[:, ::1] A = A_
    cdef double[::1] C = C_
    cdef double[::1] w = w_
    cdef double[:, ::1] T2 = T2_
    cdef double[::1] tacc = tacc_
    cdef double[:, ::1] vacc = vacc_
    cdef double s
    with nogil:
        for b in range(B):
            tacc[:] = 0.0
            vacc[:, :] = 0.0
            for g in range(G):
                A[:, :] = 0.0
                C[:] = 0.0
                T2[:, :] = 0.0
                for h in range(starts[g], starts[g + 1]):
                    for a in range(k1):
                        C[a] += S[b, h, a]
                    for p in range(q):
                        w[p] = S[b, h, I[p]] * S[b, h, J[p]]
                        A[I[p], J[p]] += w[p]
                    for p in range(q):
                        for p2 in range(p, q):
                            T2[p, p2] += w[p] * w[p2]
                for p in range(q):
                    A[J[p], I[p]] = A[I[p], J[p]]
                for p in range(q):
                    if plain:
                        tacc[p] += C[I[p]] * C[J[p]] - A[I[p], J[p]]
                    else:
                        tacc[p] += m_c * C[I[p]] * C[J[p]] - m_f * A[I[p], J[p]]
                    for p2 in range(p, q):
                        vacc[p, p2] += (0.5 * (A[J[p], J[p2]] * A[I[p], I[p2]] + A[J[p], I[p2]] * A[I[p], J[p2]])
                                        - T2[p, p2])
            for p in range(q):
                th[b, p] = tacc[p]
                for p2 in range(p, q):
                    vv[b, p, p2] = 2.0 * vacc[p, p2]
                    vv[b, p2, p] = 2.0 * vacc[p, p2]
    return theta, var
