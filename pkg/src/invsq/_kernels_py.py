"""numpy reference implementation of the assembly kernels.

Same signatures and (up to summation order inside one tet) the same
results as the compiled module `_kernels`.
"""
import numpy as np

REF_GRAD = np.array([[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
MASS_REF = (np.ones((4, 4)) + np.eye(4)) / 20.0


def element_geometry(P, nthreads=1):
    """Volumes (T,) and P1 gradients (T, 4, 3) of tets with vertex coords P (T, 4, 3)."""
    J = P[:, 1:] - P[:, :1]
    vol = np.linalg.det(J) / 6.0
    G = np.einsum("ekl,il->eik", np.linalg.inv(J), REF_GRAD)
    return vol, G


def stiffness_mass(vol, G, nthreads=1):
    """Element stiffness vol G G^T and consistent mass, both (T, 16)."""
    S = np.einsum("eik,ejk->eij", G, G) * vol[:, None, None]
    M = MASS_REF[None] * vol[:, None, None]
    return S.reshape(-1, 16), M.reshape(-1, 16)


def bloch_terms(vol, G, k, nthreads=1):
    """Imaginary part of the first-order Bloch coupling, (T, 16):

        B_ij = (k.grad phi_i - k.grad phi_j) vol / 4.
    """
    kg = np.einsum("eik,k->ei", G, np.asarray(k, dtype=float))
    B = (kg[:, :, None] - kg[:, None, :]) * (vol[:, None, None] / 4.0)
    return B.reshape(-1, 16)


def weighted_mass(W, bary, nthreads=1):
    """sum_q W[e, q] b[q, i] b[q, j] -> (T, 16); bary is (Q, 4) or (T, Q, 4)."""
    if bary.ndim == 2:
        out = np.einsum("eq,qi,qj->eij", W, bary, bary, optimize=True)
    else:
        out = np.einsum("eq,eqi,eqj->eij", W, bary, bary, optimize=True)
    return out.reshape(-1, 16)


def scatter_add(pos, vals, nnz):
    """data[pos[k]] += vals[k] in index order (deterministic)."""
    return np.bincount(pos, weights=vals, minlength=nnz)
