"""Hot kernels with a compiled implementation and a numpy fallback.

The compiled module is picked at import when it was built; setting
``SVTEST_PURE_PYTHON=1`` forces the fallback. ``BACKEND`` names the active
implementation.
"""

from __future__ import annotations

import importlib
import os

import numpy as np

from . import _pykernels

_ckernels = None
if not os.environ.get("SVTEST_PURE_PYTHON"):
    try:
        _ckernels = importlib.import_module(f"{__name__}._ckernels")
    except ImportError:  # extension not built
        _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

BACKEND = "cython" if _ckernels is not None else "python"
_impl = BACKENDS[BACKEND]


def _starts(starts) -> np.ndarray:
    return np.ascontiguousarray(starts, dtype=np.intp)


def group_sums(values, starts, backend: str | None = None) -> np.ndarray:
    """Row sums of ``values`` over the segments ``starts[g]:starts[g+1]``."""
    impl = BACKENDS[backend] if backend else _impl
    v = np.ascontiguousarray(values, dtype=float)
    if v.ndim == 1:
        return impl.group_sums(v[:, None], _starts(starts))[:, 0]
    return impl.group_sums(v, _starts(starts))


def sv_scalar_batch(S, starts, m_c: float = 1.0, m_f: float = 1.0, backend: str | None = None):
    """Contrast and its variance for a batch of scalar score sets.

    ``S`` is ``B x G_f`` (fine scores, coarse-then-fine order). Returns
    ``(theta, var)``, each of length ``B``.
    """
    impl = BACKENDS[backend] if backend else _impl
    S = np.ascontiguousarray(S, dtype=float)
    if S.ndim == 1:
        S = S[None, :]
    return impl.sv_scalar_batch(S, _starts(starts), float(m_c), float(m_f))


def sv_matrix_batch(S, starts, m_c: float = 1.0, m_f: float = 1.0, backend: str | None = None):
    """vech contrast (``B x q``) and its variance matrices (``B x q x q``)."""
    from ..statistics import vech_indices

    impl = BACKENDS[backend] if backend else _impl
    S = np.ascontiguousarray(S, dtype=float)
    if S.ndim == 2:
        S = S[None, :, :]
    I, J = vech_indices(S.shape[2])
    return impl.sv_matrix_batch(S, _starts(starts), float(m_c), float(m_f), I, J)
