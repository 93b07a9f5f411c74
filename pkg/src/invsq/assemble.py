"""Sparse assembly of the P1 forms of H_k = -(grad + ik)^2 + V and of -Delta + V.

For P1 hats phi_i the Bloch form a(phi_j, phi_i) splits into

    S_ij + |k|^2 M_ij + i B_ij + V_ij,
    B_ij = (k.grad phi_i - k.grad phi_j) |T| / 4   (per tet),

with S the stiffness, M the consistent mass and V_ij = int V phi_i phi_j.
V is integrated with a collapsed Gauss rule on ordinary tets; on tets
touching a singular vertex p the factor |x - p|^{-2} is absorbed into a
cone rule (see quadrature.singular_vertex_rule), so V is never evaluated
at p and the r^{-2} singularity is integrated exactly in the radial
direction.

CSR matrices are assembled from a cached pattern: every (tet, i, j) entry
has a fixed slot and slots are summed in tet order, so the result does not
depend on the number of threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels, model
from .mesh import DiscreteFunction, GradedMesh
from .model import AssumptionViolation, PotentialSpec
from .quadrature import map_points, singular_vertex_rule, tet_rule

TWO_PI = 2 * math.pi
CHUNK = 200_000


@dataclass(frozen=True)
class BlochVector:
    k: tuple
    reduced: tuple
    lattice_shift: tuple  # k = reduced + 2 pi * lattice_shift

    @classmethod
    def of(cls, k) -> "BlochVector":
        k = np.asarray(k, dtype=float).reshape(3)
        s = np.floor((k + math.pi) / TWO_PI)
        red = k - TWO_PI * s
        return cls(tuple(k.tolist()), tuple(red.tolist()), tuple(int(x) for x in s))

    @property
    def is_zero(self) -> bool:
        return not any(self.k)

    @property
    def norm2(self) -> float:
        return float(np.dot(self.k, self.k))


@dataclass
class DiscreteOperator:
    A: sp.csr_matrix
    M: sp.csr_matrix
    dof_of_vertex: np.ndarray       # -1 for eliminated (Dirichlet) vertices
    mesh: GradedMesh
    spec: Optional[PotentialSpec]
    k: Optional[BlochVector] = None
    assembled_shift: float = 0.0
    parts: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.A.data)

    def to_function(self, x) -> DiscreteFunction:
        x = np.asarray(x)
        vals = np.zeros(len(self.dof_of_vertex), dtype=x.dtype)
        on = self.dof_of_vertex >= 0
        vals[on] = x[self.dof_of_vertex[on]]
        return DiscreteFunction(self.mesh, vals)

    def from_function(self, u: DiscreteFunction):
        x = np.zeros(self.n, dtype=u.values.dtype)
        on = self.dof_of_vertex >= 0
        x[self.dof_of_vertex[on]] = u.values[on]
        return x

    def hermitian_defect(self) -> float:
        D = self.A - self.A.conj().T
        return float(abs(D).max()) if D.nnz else 0.0

    def shifted(self, C: float) -> "DiscreteOperator":
        """Same operator with A + C M (eigenvalues move by exactly C)."""
        return DiscreteOperator((self.A + C * self.M).tocsr(), self.M, self.dof_of_vertex, self.mesh,
                                self.spec, self.k, self.assembled_shift + C, self.parts)


# ---------------------------------------------------------------------------
# pattern


def _dof_map(mesh: GradedMesh, dirichlet: bool):
    if dirichlet:
        free = ~mesh.boundary
        dof = np.full(mesh.n_vertices, -1)
        dof[free] = np.arange(int(free.sum()))
        return dof
    # identified vertices share one dof; renumber representatives compactly
    _, dof = np.unique(mesh.ident, return_inverse=True)
    return dof


def _pattern(mesh: GradedMesh, dirichlet: bool):
    key = ("pattern", dirichlet)
    if key in mesh._cache:
        return mesh._cache[key]
    dof = _dof_map(mesh, dirichlet)
    n = int(dof.max()) + 1
    td = dof[mesh.tets]
    rows = np.repeat(td, 4, axis=1).ravel()
    cols = np.tile(td, (1, 4)).ravel()
    valid = (rows >= 0) & (cols >= 0)
    keys = rows[valid].astype(np.int64) * n + cols[valid]
    uniq, pos = np.unique(keys, return_inverse=True)
    indices = (uniq % n).astype(np.int32)
    r = uniq // n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=n), out=indptr[1:])
    pat = (dof, n, valid, pos.astype(np.int64), indices, indptr.astype(np.int32 if len(uniq) < 2**31 else np.int64))
    mesh._cache[key] = pat
    return pat


def _to_csr(mesh, dirichlet, local):
    """local: (T, 16) real element matrices -> CSR on the dofs."""
    dof, n, valid, pos, indices, indptr = _pattern(mesh, dirichlet)
    data = kernels.scatter_add(pos, local.ravel()[valid], len(indices))
    return sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(n, n))


# ---------------------------------------------------------------------------
# element integrals


def _geometry(mesh):
    if "kgeom" not in mesh._cache:
        vol, G = kernels.element_geometry(mesh.coords())
        mesh._cache["kgeom"] = (vol, G)
    return mesh._cache["kgeom"]


def potential_local(mesh: GradedMesh, spec: PotentialSpec, q: int = 3, q_radial: int = 4, q_face: int = 6):
    """(T, 16) element matrices of int V phi_i phi_j."""
    T = len(mesh.tets)
    out = np.zeros((T, 16))
    if not spec.singular and spec.smooth.is_zero:
        return out
    vol, _ = _geometry(mesh)
    inc = np.zeros(T, dtype=bool)
    for ip in range(len(spec.singular)):
        inc |= mesh.incident(ip)
    rule = tet_rule(q)
    reg = np.nonzero(~inc)[0]
    for s in range(0, len(reg), CHUNK):
        e = reg[s:s + CHUNK]
        X = map_points(mesh.coords(e), rule.bary)
        W = model.eval_potential(X, spec) * rule.weights[None, :] * (6 * vol[e])[:, None]
        out[e] = kernels.weighted_mass(W, rule.bary)
    if inc.any():
        e = np.nonzero(inc)[0]
        if not spec.smooth.is_zero:
            X = map_points(mesh.coords(e), rule.bary)
            W = spec.smooth(X) * rule.weights[None, :] * (6 * vol[e])[:, None]
            out[e] += kernels.weighted_mass(W, rule.bary)
        for ip, p in enumerate(spec.singular):
            sel = np.nonzero(mesh.incident(ip))[0]
            P = mesh.coords(sel)
            apex = np.argmax(mesh.tets[sel] == mesh.singular_vertices[ip], axis=1)
            bary, W = singular_vertex_rule(P, apex, -2.0, q_radial, q_face)
            X = np.einsum("eqi,eid->eqd", bary, P)
            # Z chi / rho^2 = r^{-2} * (Z chi r^2 / rho^2); the bracket is Z near p
            r = spec.domain.distance(X, p.position)
            chi = p.chi(r)
            rh = chi * r + (1 - chi)
            g = p.Z * chi * (r / rh) ** 2
            out[sel] += kernels.weighted_mass(W * g, bary)
    return out


def assemble_parts(mesh: GradedMesh, spec: Optional[PotentialSpec], k=None, dirichlet: bool = False):
    """Separate CSR matrices S, M, V and (k != 0) B on the dofs."""
    vol, G = _geometry(mesh)
    S, Mloc = kernels.stiffness_mass(vol, G)
    parts = {"S": _to_csr(mesh, dirichlet, S), "M": _to_csr(mesh, dirichlet, Mloc)}
    if spec is not None and (spec.singular or not spec.smooth.is_zero):
        parts["V"] = _to_csr(mesh, dirichlet, potential_local(mesh, spec))
    else:
        parts["V"] = sp.csr_matrix(parts["S"].shape)
    if k is not None and not k.is_zero:
        parts["B"] = _to_csr(mesh, dirichlet, kernels.bloch_terms(vol, G, k.k))
    return parts


def _combine(parts, k: Optional[BlochVector], C: float = 0.0):
    A = parts["S"] + parts["V"]
    if k is not None and not k.is_zero:
        A = A + k.norm2 * parts["M"] + 1j * parts["B"]
    if C:
        A = A + C * parts["M"]
    A = A.tocsr()
    A.sort_indices()
    return A


def assemble_hk(mesh: GradedMesh, spec: PotentialSpec, k) -> DiscreteOperator:
    """Bloch form on the torus (periodic identification, no boundary)."""
    if mesh.kind != model.TORUS:
        raise ValueError("assemble_hk needs a torus mesh")
    k = k if isinstance(k, BlochVector) else BlochVector.of(k)
    parts = assemble_parts(mesh, spec, k, dirichlet=False)
    A = _combine(parts, k)
    dof = _dof_map(mesh, False)
    return DiscreteOperator(A, parts["M"], dof, mesh, spec, k, 0.0, parts)


def assemble_dirichlet(mesh: GradedMesh, spec: Optional[PotentialSpec], shift: float = 0.0) -> DiscreteOperator:
    """Real symmetric form of -Delta + V + shift with u = 0 on r = R."""
    if mesh.kind != model.BALL:
        raise ValueError("assemble_dirichlet needs a ball mesh")
    parts = assemble_parts(mesh, spec, None, dirichlet=True)
    A = _combine(parts, None, shift)
    dof = _dof_map(mesh, True)
    return DiscreteOperator(A, parts["M"], dof, mesh, spec, None, float(shift), parts)


# ---------------------------------------------------------------------------
# coercivity


class CertificationError(RuntimeError):
    pass


def _is_positive_definite(A, M, C, P=None, dense_limit=3000, lu_limit=60_000):
    """Attempted factorisation (small/medium) or a smallest-Ritz estimate (large)."""
    K = (A + C * M).tocsc()
    n = K.shape[0]
    if n <= dense_limit:
        try:
            np.linalg.cholesky(K.toarray())
            return True
        except np.linalg.LinAlgError:
            return False
    if n <= lu_limit:
        try:
            lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError:
            return False
        d = lu.U.diagonal()
        # with diagonal pivoting an LDL^H-type factorisation: all pivots > 0
        return bool(np.all(np.abs(d.imag) <= 1e-10 * np.abs(d.real).max()) and np.all(d.real > 0)
                    and np.array_equal(lu.perm_r, lu.perm_c))
    from .eigensolve import smallest_ritz

    return smallest_ritz(K, M, P) > 0


def coercive_shift(spec: PotentialSpec, op: DiscreteOperator, max_doublings: int = 40) -> float:
    """C with A + C M positive definite: start at 1 + max(0, -inf V_smooth), double until certified."""
    spec.require_assumption2()
    C = 1.0 + max(0.0, -spec.smooth.lower_bound())
    for _ in range(max_doublings + 1):
        P = op.parts["S"] + op.parts["M"] if "S" in op.parts else None
        if _is_positive_definite(op.A, op.M, C, P):
            op.parts["certified_shift"] = C
            return C
        C *= 2
    raise CertificationError(f"no positive definite shift up to C = {C / 2:g}")


def hardy_quotient(op: DiscreteOperator, point_index: int = 0, samples: int = 0, seed: int = 0):
    """max over P1 u vanishing at p of int |u|^2/r^2 / int |grad u|^2.

    Computed exactly as the largest generalized eigenvalue of (W, S) on the
    dofs other than p, W_ij = int phi_i phi_j / |x - p|^2. Optional random
    samples give a lower bound check. Returns (max quotient, sampled max).
    """
    mesh = op.mesh
    p = op.spec.singular[point_index]
    unit = PotentialSpec(op.spec.domain, (model.SingularPoint(p.position, 1.0, p.cutoff_radius, p.profile),))
    dirichlet = mesh.kind == model.BALL
    W = _to_csr(mesh, dirichlet, potential_local(mesh, unit))
    S = op.parts["S"]
    keep = np.ones(op.n, dtype=bool)
    keep[op.dof_of_vertex[mesh.singular_vertices[point_index]]] = False
    W = W[keep][:, keep]
    S = S[keep][:, keep]
    if S.shape[0] <= 4000:
        import scipy.linalg as sla

        lam = sla.eigh(W.toarray(), S.toarray(), eigvals_only=True, subset_by_index=[S.shape[0] - 1, S.shape[0] - 1])
        qmax = float(lam[-1])
    else:
        lam = spla.eigsh(W, k=1, M=S, which="LA", tol=1e-8)[0]
        qmax = float(lam[0])
    smax = 0.0
    if samples:
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((S.shape[0], samples))
        num = np.einsum("ij,ij->j", X, W @ X)
        den = np.einsum("ij,ij->j", X, S @ X)
        smax = float((num / den).max())
    return qmax, smax
