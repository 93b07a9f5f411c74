# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly kernels. Per-tet work runs in an OpenMP prange; each
tet writes only its own output rows, so results do not depend on the
thread count. The scatter into CSR storage is sequential."""
import numpy as np
cimport numpy as cnp
from cython.parallel import prange

cnp.import_array()


cdef inline void _geom(const double[:, :, ::1] P, Py_ssize_t e,
                       double* vol, double[:, :, ::1] G) noexcept nogil:
    cdef double a[3][3]
    cdef double inv[3][3]
    cdef double det
    cdef int i, k
    for i in range(3):
        for k in range(3):
            a[i][k] = P[e, i + 1, k] - P[e, 0, k]
    inv[0][0] = a[1][1] * a[2][2] - a[1][2] * a[2][1]
    inv[0][1] = a[0][2] * a[2][1] - a[0][1] * a[2][2]
    inv[0][2] = a[0][1] * a[1][2] - a[0][2] * a[1][1]
    inv[1][0] = a[1][2] * a[2][0] - a[1][0] * a[2][2]
    inv[1][1] = a[0][0] * a[2][2] - a[0][2] * a[2][0]
    inv[1][2] = a[0][2] * a[1][0] - a[0][0] * a[1][2]
    inv[2][0] = a[1][0] * a[2][1] - a[1][1] * a[2][0]
    inv[2][1] = a[0][1] * a[2][0] - a[0][0] * a[2][1]
    inv[2][2] = a[0][0] * a[1][1] - a[0][1] * a[1][0]
    det = a[0][0] * inv[0][0] + a[0][1] * inv[1][0] + a[0][2] * inv[2][0]
    vol[0] = det / 6.0
    # rows of a are edge vectors; grad phi_{i+1} = column i of a^{-1}
    for k in range(3):
        G[e, 1, k] = inv[k][0] / det
        G[e, 2, k] = inv[k][1] / det
        G[e, 3, k] = inv[k][2] / det
        G[e, 0, k] = -(G[e, 1, k] + G[e, 2, k] + G[e, 3, k])


def element_geometry(double[:, :, ::1] P, int nthreads=1):
    cdef Py_ssize_t T = P.shape[0], e
    vol = np.empty(T)
    G = np.empty((T, 4, 3))
    cdef double[::1] v = vol
    cdef double[:, :, ::1] g = G
    for e in prange(T, nogil=True, num_threads=nthreads, schedule="static"):
        _geom(P, e, &v[e], g)
    return vol, G


def stiffness_mass(double[::1] vol, double[:, :, ::1] G, int nthreads=1):
    cdef Py_ssize_t T = vol.shape[0], e
    cdef int i, j
    S = np.empty((T, 16))
    M = np.empty((T, 16))
    cdef double[:, ::1] s = S
    cdef double[:, ::1] m = M
    cdef double w
    for e in prange(T, nogil=True, num_threads=nthreads, schedule="static"):
        w = vol[e]
        for i in range(4):
            for j in range(4):
                s[e, 4 * i + j] = w * (G[e, i, 0] * G[e, j, 0] + G[e, i, 1] * G[e, j, 1]
                                       + G[e, i, 2] * G[e, j, 2])
                m[e, 4 * i + j] = w * (0.1 if i == j else 0.05)
    return S, M


def bloch_terms(double[::1] vol, double[:, :, ::1] G, k, int nthreads=1):
    cdef Py_ssize_t T = vol.shape[0], e
    cdef int i, j
    cdef double k0 = k[0], k1 = k[1], k2 = k[2]
    cdef double kg[4]
    B = np.empty((T, 16))
    cdef double[:, ::1] b = B
    for e in prange(T, nogil=True, num_threads=nthreads, schedule="static"):
        for i in range(4):
            kg[i] = k0 * G[e, i, 0] + k1 * G[e, i, 1] + k2 * G[e, i, 2]
        for i in range(4):
            for j in range(4):
                b[e, 4 * i + j] = (kg[i] - kg[j]) * vol[e] * 0.25
    return B


def _wm_per_tet(double[:, ::1] W, double[:, :, ::1] bary, int nthreads):
    cdef Py_ssize_t T = W.shape[0], Q = W.shape[1], e, q
    cdef int i, j
    cdef double w
    out = np.zeros((T, 16))
    cdef double[:, ::1] o = out
    for e in prange(T, nogil=True, num_threads=nthreads, schedule="static"):
        for q in range(Q):
            w = W[e, q]
            for i in range(4):
                for j in range(4):
                    o[e, 4 * i + j] += w * bary[e, q, i] * bary[e, q, j]
    return out


def weighted_mass(W, bary, int nthreads=1):
    W = np.ascontiguousarray(W, dtype=np.float64)
    bary = np.ascontiguousarray(bary, dtype=np.float64)
    if bary.ndim == 2:
        # one rule for every tet: a (T, Q) x (Q, 16) product, left to BLAS
        return W @ np.einsum("qi,qj->qij", bary, bary).reshape(-1, 16)
    return _wm_per_tet(W, bary, nthreads)


def scatter_add(const cnp.int64_t[::1] pos, const double[::1] vals, Py_ssize_t nnz):
    cdef Py_ssize_t K = pos.shape[0], k
    out = np.zeros(nnz)
    cdef double[::1] o = out
    with nogil:
        for k in range(K):
            o[pos[k]] += vals[k]
    return out
