"""Quadrature rules on the reference triangle and tetrahedron.

All rules are collapsed (Stroud conical product) Gauss rules, so every
point lies strictly inside the element. This matters here: the potential
blows up at the singular vertices and must never be sampled there.

Reference tetrahedron: vertices (0,0,0), (1,0,0), (0,1,0), (0,0,1).
Barycentric coordinates are returned with the vertex-0 coordinate first.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class QuadratureRule:
    """Points (barycentric, shape (Q, d+1)) and weights summing to the reference measure."""

    order: int
    bary: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)


def _gauss01(q):
    x, w = roots_legendre(q)
    return (x + 1) / 2, w / 2


def _jacobi01(q, power):
    """Gauss rule on [0, 1] for the weight (1 - s)**power."""
    x, w = roots_jacobi(q, power, 0)
    return (x + 1) / 2, w / 2 ** (power + 1)


def _radial01(q, power):
    """Gauss rule on [0, 1] for the weight s**power (power > -1)."""
    if power <= -1:
        raise ValueError(f"radial weight s^{power} is not integrable at 0")
    x, w = roots_jacobi(q, 0, power)
    return (x + 1) / 2, w / 2 ** (power + 1)


@lru_cache(maxsize=None)
def triangle_rule(q: int) -> QuadratureRule:
    """Collapsed q*q rule on the reference triangle, exact to degree 2q-1."""
    a, wa = _gauss01(q)
    b, wb = _jacobi01(q, 1)
    A, B = np.meshgrid(a, b, indexing="ij")
    u = (A * (1 - B)).ravel()
    v = B.ravel()
    w = np.outer(wa, wb).ravel()
    bary = np.column_stack([1 - u - v, u, v])
    return QuadratureRule(2 * q - 1, bary, w)


@lru_cache(maxsize=None)
def tet_rule(q: int) -> QuadratureRule:
    """Collapsed q**3 rule on the reference tetrahedron, exact to degree 2q-1."""
    a, wa = _gauss01(q)
    b, wb = _jacobi01(q, 1)
    c, wc = _jacobi01(q, 2)
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    z = C
    y = B * (1 - C)
    x = A * (1 - B) * (1 - C)
    W = np.einsum("i,j,k->ijk", wa, wb, wc)
    bary = np.column_stack([(1 - x - y - z).ravel(), x.ravel(), y.ravel(), z.ravel()])
    return QuadratureRule(2 * q - 1, bary, W.ravel())


def rule_for_order(order: int) -> QuadratureRule:
    """Smallest collapsed tetrahedral rule exact to the requested polynomial degree."""
    return tet_rule(max(1, (order + 2) // 2))


def map_points(coords, bary):
    """Physical points for barycentric rule points. coords: (E, 4, 3) -> (E, Q, 3)."""
    return np.einsum("qi,eid->eqd", bary, coords)


def singular_vertex_rule(coords, apex, power, q_radial=4, q_face=6):
    """Rule for integrals of |x - p|**power * g(x) over tets having p as a vertex.

    coords : (E, 4, 3) tet vertices; apex : (E,) local index of the vertex p.
    The tet is swept as a cone x = p + s (y - p), y on the opposite face, so
    the volume element is s^2 h ds dA(y) and the singular weight becomes
    s**(power + 2) |y - p|**power, integrated exactly in s by Gauss-Jacobi.

    Returns barycentric points (E, Q, 4) and weights (E, Q) with the singular
    weight folded in: sum_q w g(x_q) ~ integral of |x - p|**power g.
    """
    coords = np.asarray(coords, dtype=float)
    apex = np.asarray(apex)
    E = len(coords)
    s, ws = _radial01(q_radial, power + 2)
    face = triangle_rule(q_face)
    others = np.array([[j for j in range(4) if j != l] for l in range(4)])
    opp = others[apex]                                  # (E, 3)
    rows = np.arange(E)[:, None]
    P = coords[np.arange(E), apex]                      # (E, 3)
    F = coords[rows, opp]                               # (E, 3, 3)
    n = np.cross(F[:, 1] - F[:, 0], F[:, 2] - F[:, 0])  # |n| = 2 |face|
    twice_area = np.linalg.norm(n, axis=1)
    height = np.abs(np.einsum("ed,ed->e", F[:, 0] - P, n)) / twice_area
    Y = np.einsum("qa,ead->eqd", face.bary, F)          # face points (E, Qf, 3)
    dist = np.linalg.norm(Y - P[:, None, :], axis=2)    # (E, Qf)
    # weight for (face point, radial point)
    wf = face.weights[None, :] * twice_area[:, None] * dist**power * height[:, None]
    W = wf[:, :, None] * ws[None, None, :]              # (E, Qf, Qs)
    Qf, Qs = face.size, len(s)
    bary = np.zeros((E, Qf, Qs, 4))
    bary[np.arange(E), :, :, apex] = (1 - s)[None, :]
    for a in range(3):
        bary[rows[:, 0], :, :, opp[:, a]] = face.bary[None, :, a, None] * s[None, None, :]
    return bary.reshape(E, Qf * Qs, 4), W.reshape(E, Qf * Qs)
