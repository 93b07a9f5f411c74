"""Backend selection for the assembly kernels.

The compiled module is used when it was built; set INVSQ_BACKEND=python to
force the numpy fallback. `set_threads` caps the OpenMP threads of the
compiled kernels (the fallback is single threaded apart from BLAS).
"""
import os

import numpy as np

from . import _kernels_py

_threads = 1

try:
    if os.environ.get("INVSQ_BACKEND", "").lower() == "python":
        raise ImportError("forced")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"


def set_threads(n: int):
    global _threads
    _threads = max(1, int(n))


def get_threads() -> int:
    return _threads


def use_backend(name: str):
    """Switch backend at run time ("cython" or "python"); returns the previous one."""
    global _impl, BACKEND
    prev = BACKEND
    if name == "python":
        _impl, BACKEND = _kernels_py, "python"
    elif name == "cython":
        from . import _kernels

        _impl, BACKEND = _kernels, "cython"
    else:
        raise ValueError(name)
    return prev


def element_geometry(P):
    return _impl.element_geometry(np.ascontiguousarray(P, dtype=np.float64), _threads)


def stiffness_mass(vol, G):
    return _impl.stiffness_mass(np.ascontiguousarray(vol), np.ascontiguousarray(G), _threads)


def bloch_terms(vol, G, k):
    return _impl.bloch_terms(np.ascontiguousarray(vol), np.ascontiguousarray(G),
                             np.asarray(k, dtype=np.float64), _threads)


def weighted_mass(W, bary):
    return _impl.weighted_mass(np.ascontiguousarray(W, dtype=np.float64),
                               np.ascontiguousarray(bary, dtype=np.float64), _threads)


def scatter_add(pos, vals, nnz):
    return _impl.scatter_add(np.ascontiguousarray(pos, dtype=np.int64),
                             np.ascontiguousarray(vals, dtype=np.float64), int(nnz))
