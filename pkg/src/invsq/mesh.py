"""Graded tetrahedral meshes of the unit torus and of balls.

Both meshes start from a Kuhn (Freudenthal) grid: every cube is split into
the six tetrahedra x_{s(1)} >= x_{s(2)} >= x_{s(3)}, one per permutation s.
The triangulation is invariant under coordinate permutations and
reflections through cell faces, so symmetry sectors of it are again
unions of whole tetrahedra.

Ball: the cube [-1, 1]^3 is mapped onto the ball by
    x = xi / |xi|_2 * r(|xi|_inf),
so that max-norm shells become spheres. r grades radially toward the
centre (see `radial_map`). The vertices of one shell all lie on one sphere.

Torus: the n^3 Kuhn grid is kept away from the singular points. In a
max-norm box of half-width w = L h around each point p the displacement
e = x - p is replaced by

    g(t) [beta e/|e|_2 + (1 - beta) e/|e|_inf],  t = |e|_inf,
    g(t) = w (t/w)^{1/mu},

with beta = 1 inside the box and a linear ramp to 0 across the outermost
layer, so that the box boundary is left in place and the mesh stays
conforming.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Optional, Sequence

import numpy as np

from . import model
from .model import BALL, TORUS, PotentialSpec
from .quadrature import map_points, singular_vertex_rule, tet_rule

PERMS = tuple(permutations(range(3)))
REF_GRAD = np.array([[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

FULL = "full"
OCTANT = "octant"
WEDGE = "wedge"
SYMMETRY_FACTOR = {FULL: 1, OCTANT: 8, WEDGE: 48}


class MeshError(ValueError):
    pass


def kuhn_tets(cells, vid, sigma=None):
    """Six Kuhn tets per cell.

    cells : (C, 3) integer lower corners; vid : maps (K, 3) integer grid
    coordinates to vertex ids. sigma : optional (C, 3) of +-1; the pattern of
    a cell is reflected along every axis with sigma = -1, so its long
    diagonal runs from the corner b + (sigma < 0) in direction sigma.
    Reflecting per octant around a point keeps every diagonal pointing away
    from it; the result is still conforming because the triangulation of a
    face does not depend on the orientation normal to it.

    Returns (6C, 4) tets with those of one permutation stored contiguously,
    and the orientation sign of each tet on the reference grid.
    """
    cells = np.asarray(cells)
    if sigma is None:
        sigma = np.ones_like(cells)
    start = cells + (sigma < 0)
    flip = np.prod(sigma, axis=1)
    out, sign = [], []
    for perm in PERMS:
        v = start.copy()
        cols = [vid(v)]
        for ax in perm:
            v = v.copy()
            v[:, ax] += sigma[:, ax]
            cols.append(vid(v))
        out.append(np.stack(cols, 1))
        sign.append(_perm_sign(perm) * flip)
    return np.concatenate(out), np.concatenate(sign)


def _perm_sign(p):
    inv = sum(1 for i in range(3) for j in range(i + 1, 3) if p[i] > p[j])
    return -1 if inv % 2 else 1


def _orient(tets, sign):
    neg = sign < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]
    return tets


def layer_radii(cutoff: float, n_layers: int, mu: float) -> np.ndarray:
    """r_j = cutoff (j / n_layers)^{1/mu}, j = 1..n_layers."""
    j = np.arange(1, n_layers + 1)
    return cutoff * (j / n_layers) ** (1.0 / mu)


def default_mu(Z: float, eps: float = 0.05) -> float:
    """min(1, sqrt(1/4 + Z) - eps)."""
    return min(1.0, math.sqrt(0.25 + Z) - eps)


def radial_map(tau, c, mu):
    """Graded radius for the stretched coordinate tau >= 0.

    r = c (mu tau / c)^{1/mu} for tau <= c/mu, continued linearly with unit
    slope beyond; dr/dtau is continuous at tau = c/mu. The grid tau_j = j dt
    gives r_j = c (j / L)^{1/mu} inside with L = c/(mu dt).
    """
    tau = np.asarray(tau, dtype=float)
    if mu == 1.0:
        return tau.copy()
    knee = c / mu
    inner = c * np.clip(mu * tau / c, 0.0, None) ** (1.0 / mu)
    return np.where(tau <= knee, inner, c + tau - knee)


@dataclass
class GradedMesh:
    kind: str
    vertices: np.ndarray            # (N, 3)
    tets: np.ndarray                # (T, 4), positively oriented
    ident: np.ndarray               # (N,) representative index (dof id before boundary elimination)
    boundary: np.ndarray            # (N,) Dirichlet vertices (ball outer sphere)
    singular_vertices: tuple        # vertex id of each singular point
    mu: tuple
    n: int
    spec: Optional[PotentialSpec] = None
    grading_radius: tuple = ()
    symmetry: str = FULL
    radius: float = 1.0
    layer_r: tuple = ()             # per singular point: radii of the vertex shells around it
    _cache: dict = field(default_factory=dict, repr=False)

    # geometry -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_reps(self) -> int:
        return int(self.ident.max()) + 1

    @property
    def symmetry_factor(self) -> int:
        return SYMMETRY_FACTOR[self.symmetry]

    def coords(self, sel=None):
        t = self.tets if sel is None else self.tets[sel]
        return self.vertices[t]

    @property
    def volumes(self) -> np.ndarray:
        if "vol" not in self._cache:
            P = self.coords()
            self._cache["vol"] = np.linalg.det(P[:, 1:] - P[:, :1]) / 6.0
        return self._cache["vol"]

    @property
    def total_volume(self) -> float:
        """Volume of the meshed region, expanded by the symmetry factor."""
        return float(self.volumes.sum()) * self.symmetry_factor

    @property
    def gradients(self) -> np.ndarray:
        """Constant P1 basis gradients, (T, 4, 3)."""
        if "grad" not in self._cache:
            P = self.coords()
            J = P[:, 1:] - P[:, :1]                    # rows are edge vectors
            self._cache["grad"] = np.einsum("ekl,il->eik", np.linalg.inv(J), REF_GRAD)
        return self._cache["grad"]

    @property
    def h_max(self) -> float:
        P = self.coords()
        h = 0.0
        for a in range(4):
            for b in range(a + 1, 4):
                h = max(h, float(np.linalg.norm(P[:, a] - P[:, b], axis=1).max()))
        return h

    def shape_ratios(self) -> np.ndarray:
        """Circumradius / inradius per tet (3 for the regular tetrahedron)."""
        P = self.coords()
        a = P[:, 1:] - P[:, :1]
        vol = np.abs(np.linalg.det(a)) / 6
        faces = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
        area = sum(
            0.5 * np.linalg.norm(np.cross(P[:, j] - P[:, i], P[:, k] - P[:, i]), axis=1) for i, j, k in faces
        )
        r_in = 3 * vol / area
        # circumcentre c: 2 a c = |a|^2 (relative to vertex 0)
        rhs = 0.5 * (a**2).sum(-1)
        c = np.linalg.solve(a, rhs[..., None])[..., 0]
        r_out = np.linalg.norm(c, axis=1)
        return r_out / r_in

    @property
    def shape_constant(self) -> float:
        if "shape" not in self._cache:
            self._cache["shape"] = float(self.shape_ratios().max())
        return self._cache["shape"]

    def incident(self, point_index: int = 0) -> np.ndarray:
        """Mask of tets having the singular vertex of point `point_index`."""
        key = ("inc", point_index)
        if key not in self._cache:
            v = self.singular_vertices[point_index]
            self._cache[key] = (self.tets == v).any(1)
        return self._cache[key]

    def singular_position(self, point_index: int = 0) -> np.ndarray:
        return self.vertices[self.singular_vertices[point_index]]

    def ray_vertices(self, point_index: int = 0):
        """Vertex ids on the 26 grid rays through a singular vertex, by shell.

        Returns (radii (L,), ids (L, 26) with -1 where a ray leaves the mesh,
        directions (26, 3)). Shell j holds the vertices at max-norm grid
        distance j, which all lie at the same distance r_j from p.
        """
        key = ("rays", point_index)
        if key not in self._cache:
            self._cache[key] = _ray_vertices(self, point_index)
        return self._cache[key]


# ---------------------------------------------------------------------------
# ball


def _ball_cells(m: int, symmetry: str):
    """Lower corners of the cells of one sector, grid coordinates in [-m, m]."""
    if symmetry == FULL:
        g = np.arange(-m, m)
        return np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    g = np.arange(m)
    C = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    if symmetry == WEDGE:
        C = C[(C[:, 0] >= C[:, 1]) & (C[:, 1] >= C[:, 2])]
    return C


def build_ball_mesh(R: float, n: int, mu: float = 1.0, grading_radius: Optional[float] = None,
                    spec: Optional[PotentialSpec] = None, symmetry: str = FULL) -> GradedMesh:
    """Ball of radius R with n cells across the diameter, graded toward the centre.

    symmetry = "octant" keeps x, y, z >= 0 and "wedge" keeps 0 <= z <= y <= x
    (1/8 and 1/48 of the ball). On the cut planes the natural boundary
    condition holds, so these sectors carry exactly the functions of the full
    ball that are invariant under the cubic symmetry group; ground states of
    radial problems are among them.
    """
    if n < 4 or n % 2:
        raise MeshError("n must be even and >= 4")
    if not 0 < mu <= 1:
        raise MeshError("grading exponent mu must lie in (0, 1]")
    if symmetry not in SYMMETRY_FACTOR:
        raise MeshError(f"unknown symmetry {symmetry!r}")
    if spec is not None:
        if spec.domain.kind != BALL or abs(spec.domain.radius - R) > 1e-14:
            raise MeshError("spec domain does not match the ball")
        if len(spec.singular) > 1 or (spec.singular and any(spec.singular[0].position)):
            raise MeshError("ball meshes support one singular point, at the centre")
    m = n // 2
    if grading_radius is None:
        if spec is not None and spec.singular and not spec.singular[0].is_global:
            grading_radius = spec.singular[0].cutoff_radius
        else:
            grading_radius = min(1.0, R / 2)
    c = float(grading_radius)
    if not 0 < c < R:
        raise MeshError("grading radius must lie in (0, R)")

    lo = -m if symmetry == FULL else 0
    size = m - lo + 1

    def vid(v):
        return ((v[:, 0] - lo) * size + (v[:, 1] - lo)) * size + (v[:, 2] - lo)

    cells = _ball_cells(m, symmetry)
    sigma = np.where(cells >= 0, 1, -1)
    tets, sign = kuhn_tets(cells, vid, sigma)
    if symmetry == WEDGE:
        # kuhn_tets stacks the tets of each permutation; the centroid offset
        # inside the cell is fixed per permutation
        C = len(cells)
        cen = np.empty((len(tets), 3))
        for k, perm in enumerate(PERMS):
            v = np.zeros(3)
            acc = np.zeros(3)
            for ax in perm:
                v[ax] += 1
                acc += v
            cen[k * C:(k + 1) * C] = cells + acc / 4
        keep = (cen[:, 0] >= cen[:, 1]) & (cen[:, 1] >= cen[:, 2])
        tets, sign = tets[keep], sign[keep]
    tets = _orient(tets, sign)

    used = np.unique(tets)
    remap = np.full(size**3, -1)
    remap[used] = np.arange(len(used))
    tets = remap[tets]
    i = used // (size * size) + lo
    j = (used // size) % size + lo
    k = used % size + lo
    xi = np.stack([i, j, k], 1).astype(float) / m
    t = np.abs(xi).max(1)
    T = (c / mu + R - c) if mu < 1 else R
    r = radial_map(t * T, c, mu)
    nrm = np.linalg.norm(xi, axis=1)
    nrm[nrm == 0] = 1.0
    X = xi / nrm[:, None] * r[:, None]
    bnd = np.abs(t - 1) < 1e-12
    X[bnd] *= R / np.linalg.norm(X[bnd], axis=1)[:, None]
    centre = int(np.argmin(np.abs(xi).sum(1)))
    shells = radial_map(np.arange(m + 1) / m * T, c, mu)
    shells[-1] = R
    mesh = GradedMesh(
        kind=BALL,
        vertices=X,
        tets=tets,
        ident=np.arange(len(X)),
        boundary=bnd,
        singular_vertices=(centre,),
        mu=(float(mu),),
        n=n,
        spec=spec,
        grading_radius=(c,),
        symmetry=symmetry,
        radius=float(R),
        layer_r=(shells,),
    )
    mesh._cache["grid"] = (np.stack([i, j, k], 1), lo, m)
    _check_orientation(mesh)
    return mesh


def _check_orientation(mesh):
    vol = mesh.volumes
    if not np.all(vol > 0):
        bad = int((vol <= 0).sum())
        raise MeshError(f"{bad} inverted or degenerate tetrahedra (grading too strong for this n)")


# ---------------------------------------------------------------------------
# torus


def build_torus_mesh(spec: Optional[PotentialSpec], n: int, mu=None, n_layers=None) -> GradedMesh:
    """Periodic Kuhn mesh of R^3/Z^3 with n cells per side.

    The first singular point sits at a grid vertex; further points must be
    on the same grid. mu: one exponent per point (default min(1, eta_p - 0.05)).
    n_layers: graded layers per point (default floor(cutoff_radius * n)).
    """
    if n < 4 or n % 2:
        raise MeshError("n must be even and >= 4")
    pts = spec.singular if spec is not None else ()
    if spec is not None and spec.domain.kind != TORUS:
        raise MeshError("spec domain is not the torus")
    if mu is None:
        mu = tuple(default_mu(p.Z) if p.Z > -0.25 else 1.0 for p in pts)
    elif np.ndim(mu) == 0:
        mu = (float(mu),) * len(pts)
    mu = tuple(float(x) for x in mu)
    if len(mu) != len(pts):
        raise MeshError("one grading exponent per singular point")
    for x in mu:
        if not 0 < x <= 1:
            raise MeshError("grading exponent mu must lie in (0, 1]")
    h = 1.0 / n
    origin = np.zeros(3) if not pts else np.asarray(pts[0].position) - 0.5
    size = n + 1
    g = np.arange(size)
    I = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    X = origin + I * h
    rep = I % n
    ident = (rep[:, 0] * n + rep[:, 1]) * n + rep[:, 2]

    def vid(v):
        return (v[:, 0] * size + v[:, 1]) * size + v[:, 2]

    gc = np.arange(n)
    cells = np.stack(np.meshgrid(gc, gc, gc, indexing="ij"), -1).reshape(-1, 3)
    # diagonals point away from the first singular point (at grid index n/2)
    sigma = np.where(cells >= n // 2, 1, -1) if pts else None
    tets, sign = kuhn_tets(cells, vid, sigma)
    tets = _orient(tets, sign)

    sing, widths, shells = [], [], []
    X0 = X.copy()
    for ip, p in enumerate(pts):
        e = X0 - np.asarray(p.position)
        e -= np.round(e)
        ig = np.round(e / h)
        if np.abs(e / h - ig).min(axis=1).max() > 1e-9 and not np.any(np.all(np.abs(e / h - ig) < 1e-9, axis=1)):
            raise MeshError(f"singular point {ip} is not a vertex of the n={n} grid")
        at = np.all(np.abs(e) < 1e-9 * h + 1e-12, axis=1)
        if not at.any():
            raise MeshError(f"singular point {ip} is not a vertex of the n={n} grid")
        sing.append(int(np.nonzero(at & (ident == ident[np.argmax(at)]))[0][0]))
        L = int(math.floor(p.cutoff_radius * n + 1e-9)) if n_layers is None else int(n_layers)
        if L < 2:
            raise MeshError(f"cutoff radius {p.cutoff_radius} spans fewer than 2 layers at n={n}")
        w = L * h
        widths.append(w)
        shells.append(np.concatenate([[0.0], layer_radii(w, L, mu[ip])]))
        # mu = 1 still rounds the shells into spheres (g(t) = t)
        t = np.abs(e).max(1)
        inside = (t < w - 1e-12) & (t > 0)
        ei, ti = e[inside], t[inside]
        gt = w * (ti / w) ** (1.0 / mu[ip])
        beta = np.clip((w - ti) / h, 0.0, 1.0)
        d2 = ei / np.linalg.norm(ei, axis=1)[:, None]
        dinf = ei / ti[:, None]
        X[inside] += gt[:, None] * (beta[:, None] * d2 + (1 - beta[:, None]) * dinf) - ei
    mesh = GradedMesh(
        kind=TORUS,
        vertices=X,
        tets=tets,
        ident=ident,
        boundary=np.zeros(len(X), dtype=bool),
        singular_vertices=tuple(sing),
        mu=mu,
        n=n,
        spec=spec,
        grading_radius=tuple(widths),
        symmetry=FULL,
        radius=1.0,
        layer_r=tuple(shells),
    )
    mesh._cache["grid"] = (I, 0, n)
    _check_orientation(mesh)
    return mesh


# ---------------------------------------------------------------------------
# rays and sampling

STENCIL = np.array(
    [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1) if (a, b, c) != (0, 0, 0)]
)


def _ray_vertices(mesh: GradedMesh, ip: int):
    I, lo, m = mesh._cache["grid"]
    v0 = mesh.singular_vertices[ip]
    base = I[v0]
    lookup = {}
    if mesh.kind == TORUS:
        n = m
        key = (I % n)
        table = np.full(n**3, -1)
        # any vertex of the class works for sampling (values agree)
        table[(key[:, 0] * n + key[:, 1]) * n + key[:, 2]] = np.arange(len(I))
        L = len(mesh.layer_r[ip]) - 1
        ids = np.full((L, 26), -1)
        for j in range(1, L + 1):
            q = (base + j * STENCIL) % n
            ids[j - 1] = table[(q[:, 0] * n + q[:, 1]) * n + q[:, 2]]
        radii = mesh.layer_r[ip][1:]
    else:
        size = m - lo + 1 if lo < 0 else m + 1
        full = np.full(size**3, -1)
        full[((I[:, 0] - lo) * size + (I[:, 1] - lo)) * size + (I[:, 2] - lo)] = np.arange(len(I))
        ids = np.full((m, 26), -1)
        for j in range(1, m + 1):
            q = base + j * STENCIL
            # sector meshes: use the symmetric image inside the sector
            if mesh.symmetry in (OCTANT, WEDGE):
                q = np.abs(q)
            if mesh.symmetry == WEDGE:
                q = -np.sort(-q, axis=1)
            ok = np.all((q >= lo) & (q <= m), axis=1)
            qq = q[ok]
            ids[j - 1, ok] = full[((qq[:, 0] - lo) * size + (qq[:, 1] - lo)) * size + (qq[:, 2] - lo)]
        radii = mesh.layer_r[ip][1:]
    return radii, ids, STENCIL / np.linalg.norm(STENCIL, axis=1)[:, None]


def locate(mesh: GradedMesh, pts, k: int = 32):
    """Tet index and barycentric coordinates for each point (-1 if not found)."""
    from scipy.spatial import cKDTree

    if "tree" not in mesh._cache:
        cen = mesh.coords().mean(1)
        mesh._cache["tree"] = cKDTree(cen)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    _, cand = mesh._cache["tree"].query(pts, k=min(k, len(mesh.tets)))
    out_t = np.full(len(pts), -1)
    out_b = np.zeros((len(pts), 4))
    P = mesh.coords()
    for i, x in enumerate(pts):
        T = P[cand[i]]
        J = T[:, 1:] - T[:, :1]
        lam = np.linalg.solve(np.transpose(J, (0, 2, 1)), (x - T[:, 0])[..., None])[..., 0]
        bary = np.column_stack([1 - lam.sum(1), lam])
        ok = np.nonzero(bary.min(1) >= -1e-10)[0]
        if len(ok):
            out_t[i] = cand[i][ok[0]]
            out_b[i] = bary[ok[0]]
    return out_t, out_b


# ---------------------------------------------------------------------------
# discrete functions


@dataclass
class DiscreteFunction:
    """P1 function: one (complex or real) value per vertex, equal on identified vertices."""

    mesh: GradedMesh
    values: np.ndarray
    truncated_singular: tuple = ()

    @classmethod
    def from_reps(cls, mesh, rep_values):
        return cls(mesh, np.asarray(rep_values)[mesh.ident])

    def at(self, pts):
        t, b = locate(self.mesh, pts)
        if np.any(t < 0):
            raise ValueError("point outside the mesh")
        return np.einsum("qi,qi->q", b, self.values[self.mesh.tets[t]])

    def tet_values(self, sel=None):
        t = self.mesh.tets if sel is None else self.mesh.tets[sel]
        return self.values[t]


def interpolate(f: Callable, mesh: GradedMesh) -> DiscreteFunction:
    """Nodal interpolant. At singular vertices f(p) if finite, else the limit along the first shell.

    The limit is estimated from f at p + r_1 2^{-k} e (k = 0..4). A sequence
    that keeps growing is declared divergent: the node is set to 0 and flagged.
    """
    X = mesh.vertices
    sing = set(mesh.singular_vertices)
    mask = np.ones(len(X), dtype=bool)
    mask[list(sing)] = False
    fv = np.asarray(f(X[mask]))
    vals = np.zeros(len(X), dtype=np.result_type(float, fv.dtype))
    vals[mask] = fv
    flags = []
    for ip, v in enumerate(mesh.singular_vertices):
        r1 = mesh.layer_r[ip][1] if len(mesh.layer_r) > ip else mesh.h_max
        e = np.array([1.0, 0.7, 0.3]) / np.linalg.norm([1.0, 0.7, 0.3])
        with np.errstate(divide="ignore", invalid="ignore"):
            at_p = np.asarray(f(X[v][None]))[0]
        if np.isfinite(at_p):
            vals[mesh.ident == mesh.ident[v]] = at_p
            continue
        seq = np.array([f((X[v] + r1 * 2.0**-k * e)[None])[0] for k in range(5)])
        d = np.abs(np.diff(seq))
        growing = np.abs(seq[-1]) > 1.05 * np.abs(seq[-2]) and np.abs(seq[-2]) > 1.05 * np.abs(seq[-3])
        if not np.all(np.isfinite(seq)) or (growing and d[-1] >= 0.9 * d[-2]):
            val = 0.0
            flags.append(ip)
        else:
            val = seq[-1]
        vals[mesh.ident == mesh.ident[v]] = val
    return DiscreteFunction(mesh, vals, tuple(flags))


# ---------------------------------------------------------------------------
# weighted norms


def _rho_weight_integral(mesh, spec, sel, power_rho, g_fun, qrule=3, chunk=100_000):
    """sum over selected tets of int rho^power_rho * g(x, tet) with a regular rule."""
    rule = tet_rule(qrule)
    idx = np.nonzero(sel)[0]
    total = 0.0
    for s in range(0, len(idx), chunk):
        e = idx[s:s + chunk]
        P = mesh.coords(e)
        X = map_points(P, rule.bary)
        w = rule.weights[None, :] * 6 * mesh.volumes[e][:, None]
        rh = model.rho(X, spec) if spec is not None and spec.singular else np.ones(X.shape[:-1])
        total += float(np.sum(w * rh**power_rho * g_fun(e, rule.bary)))
    return total


def weighted_norm(u: DiscreteFunction, m: int, a: float, spec: Optional[PotentialSpec] = None,
                  exclude_incident: bool = False) -> float:
    """Discrete K^m_a norm (sum_{|b| <= m} int rho^{2(|b| - a)} |d^b u|^2)^{1/2}.

    Tets touching a singular vertex are integrated with the cone rule that
    absorbs the power of |x - p| exactly. exclude_incident drops them, which
    gives the part of the norm that is comparable across refinements even
    when the full integral diverges.
    """
    if m not in (0, 1):
        raise ValueError("P1 functions: m in {0, 1}")
    mesh = u.mesh
    spec = spec if spec is not None else mesh.spec
    vals = u.values
    inc = np.zeros(len(mesh.tets), dtype=bool)
    if spec is not None and spec.singular:
        for ip in range(len(spec.singular)):
            inc |= mesh.incident(ip)
    reg = ~inc

    def u2(e, bary):
        return np.abs(np.einsum("qi,ei->eq", bary, vals[mesh.tets[e]])) ** 2

    G = mesh.gradients

    def du2(e, bary):
        g = np.einsum("eik,ei->ek", G[e], vals[mesh.tets[e]])
        return np.repeat((np.abs(g) ** 2).sum(1)[:, None], len(bary), 1)

    total = _rho_weight_integral(mesh, spec, reg, -2 * a, u2)
    if m == 1:
        total += _rho_weight_integral(mesh, spec, reg, 2 * (1 - a), du2)
    if inc.any() and not exclude_incident:
        for ip in range(len(spec.singular)):
            total += _incident_weighted(u, spec, ip, a, m)
    total *= mesh.symmetry_factor
    return math.sqrt(total)


def _incident_weighted(u, spec, ip, a, m):
    mesh = u.mesh
    sel = np.nonzero(mesh.incident(ip))[0]
    T = mesh.tets[sel]
    v = mesh.singular_vertices[ip]
    apex = np.argmax(T == v, axis=1)
    P = mesh.coords(sel)
    p = P[np.arange(len(sel)), apex]
    vals = u.values[T]
    up = vals[np.arange(len(sel)), apex]
    vanishes = np.all(np.abs(up) <= 1e-300)
    total = 0.0
    terms = [(-2 * a, 0)] + ([(2 * (1 - a), 1)] if m == 1 else [])
    for power, order in terms:
        # for order 0 with u(p) = 0, |u|^2 ~ r^2 near p: integrate r^{power+2} (u/r)^2
        extra = 2 if (order == 0 and vanishes) else 0
        if power + extra + 2 <= -1:
            if order == 1:
                G = mesh.gradients[sel]
                if np.all(np.einsum("eik,ei->ek", G, vals) == 0):
                    continue
            return math.inf
        bary, W = singular_vertex_rule(P, apex, power + extra)
        X = np.einsum("eqi,eid->eqd", bary, P)
        r = np.linalg.norm(X - p[:, None, :], axis=-1)
        rh = model.rho(X, spec)
        corr = (rh / r) ** power  # ratio rho/r is 1 inside the inner radius
        if order == 0:
            g = np.abs(np.einsum("eqi,ei->eq", bary, vals)) ** 2
            if extra:
                g = g / r**2
        else:
            gr = np.einsum("eik,ei->ek", mesh.gradients[sel], vals)
            g = np.repeat((np.abs(gr) ** 2).sum(1)[:, None], bary.shape[1], 1)
        total += float(np.sum(W * corr * g))
    return total


def plain_norm(u: DiscreteFunction, m: int) -> float:
    """Unweighted discrete H^m norm with the same quadrature (rho == 1)."""
    mesh = u.mesh
    vals = u.values
    rule = tet_rule(3)
    w = rule.weights[None, :] * 6 * mesh.volumes[:, None]
    total = float(np.sum(w * np.abs(np.einsum("qi,ei->eq", rule.bary, vals[mesh.tets])) ** 2))
    if m == 1:
        g = np.einsum("eik,ei->ek", mesh.gradients, vals[mesh.tets])
        total += float(np.sum(mesh.volumes * (np.abs(g) ** 2).sum(1)))
    return math.sqrt(total * mesh.symmetry_factor)
