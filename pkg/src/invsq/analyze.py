"""Post-processing of computed eigenpairs.

Singular exponents from spherical averages on the 26 grid rays, weighted
norm profiles across refinements, eigenvalue convergence rates, exponential
decay on truncated balls and the bottom of the essential spectrum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import mesh as meshmod
from .model import DomainError, PotentialSpec, SingularPoint, rho

PREASYMPTOTIC_R2 = 0.9
MIN_RADII = 6


class FitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# singular exponents


@dataclass
class ExponentFit:
    point: Optional[SingularPoint]
    window: tuple
    slope: float                 # gamma in u ~ r^gamma (g0 + g2 r^2)
    intercept: float             # log g0
    r2: float
    angular_variation: float
    plain_slope: float           # straight log-log slope, no r^2 term
    n_radii: int
    vanishes: bool = False
    radii: np.ndarray = field(default=None, repr=False)
    averages: np.ndarray = field(default=None, repr=False)


def fit_power_law(r, ubar, curvature: bool = True):
    """Least squares log|u| = gamma log r + c (+ d r^2).

    The r^2 column absorbs the first even correction of the expansion, so
    gamma is the leading exponent even when the window is not tiny.
    Returns (gamma, c, r2, plain_gamma).
    """
    r = np.asarray(r, dtype=float)
    y = np.log(np.abs(np.asarray(ubar, dtype=float)))
    lr = np.log(r)
    cols = [lr, np.ones_like(r)] + ([r**2] if curvature else [])
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    fit = X @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - fit) ** 2)) / ss if ss > 0 else 1.0
    plain = np.polyfit(lr, y, 1)[0]
    return float(coef[0]), float(coef[1]), r2, float(plain)


def default_window(mesh, point_index: int = 0):
    """(r_lo, r_hi): skip the two innermost shells and the outer third of the cutoff ball."""
    radii = mesh.layer_r[point_index][1:]
    p = mesh.spec.singular[point_index] if mesh.spec is not None and mesh.spec.singular else None
    inner = p.inner_radius if p is not None else math.inf
    r_hi = min(2.0 / 3.0 * inner, mesh.radius / 3.0 if mesh.kind == "ball" else 0.5)
    return float(radii[2]), float(r_hi)


def shell_samples(u, point_index: int = 0):
    """(radii, values (L, 26)) of u on the grid rays through the singular vertex."""
    radii, ids, _ = u.mesh.ray_vertices(point_index)
    vals = np.full(ids.shape, np.nan, dtype=u.values.dtype)
    ok = ids >= 0
    vals[ok] = u.values[ids[ok]]
    return np.asarray(radii), vals


def fit_singular_exponent(u, point_index: int = 0, window=None, curvature: bool = True) -> ExponentFit:
    mesh = u.mesh
    radii, vals = shell_samples(u, point_index)
    r_lo, r_hi = window if window is not None else default_window(mesh, point_index)
    sel = (radii >= r_lo * (1 - 1e-12)) & (radii <= r_hi * (1 + 1e-12))
    sel &= np.all(np.isfinite(vals), axis=1)
    if sel.sum() < MIN_RADII:
        raise FitError(f"fit window [{r_lo:.3g}, {r_hi:.3g}] holds {int(sel.sum())} shells, need {MIN_RADII}")
    r = radii[sel]
    V = vals[sel]
    # fix the global phase so the averages are real
    ph = np.mean(V)
    V = V * (np.conj(ph) / abs(ph)) if abs(ph) > 0 else V
    V = V.real
    ubar = V.mean(axis=1)
    point = mesh.spec.singular[point_index] if mesh.spec is not None and mesh.spec.singular else None
    scale = float(np.max(np.abs(u.values)))
    if np.all(np.abs(V) < 1e-13 * scale) or np.any(ubar == 0):
        return ExponentFit(point, (r_lo, r_hi), math.nan, math.nan, math.nan, math.nan, math.nan,
                           len(r), True, r, ubar)
    gamma, c, r2, plain = fit_power_law(r, ubar, curvature)
    ang = angular_variation(V, ubar)
    return ExponentFit(point, (r_lo, r_hi), gamma, c, r2, ang, plain, len(r), False, r, ubar)


def subtract_singular_part(u, window=None):
    """(remainder, coeffs): u - sum_p a_p chi_p rho^{gamma_p}, gamma_p = sqrt(1/4 + Z_p) - 1/2.

    a_p is fitted by least squares of the shell averages against r^gamma and
    r^(gamma+2) on the fit window. Where rho^gamma is infinite (gamma < 0 at p)
    the remainder keeps the nodal value of u.
    """
    mesh = u.mesh
    spec = mesh.spec
    X = mesh.vertices
    idx, r = spec.nearest(X)
    rh = rho(X, spec)
    vals = np.array(u.values, copy=True)
    coeffs = []
    for ip, p in enumerate(spec.singular):
        gamma = math.sqrt(0.25 + p.Z) - 0.5
        radii, V = shell_samples(u, ip)
        r_lo, r_hi = window if window is not None else default_window(mesh, ip)
        sel = (radii >= r_lo * (1 - 1e-12)) & (radii <= r_hi * (1 + 1e-12)) & np.all(np.isfinite(V), axis=1)
        if sel.sum() < MIN_RADII:
            raise FitError(f"fit window [{r_lo:.3g}, {r_hi:.3g}] holds {int(sel.sum())} shells, need {MIN_RADII}")
        rs = radii[sel]
        A = np.column_stack([rs**gamma, rs ** (gamma + 2)])
        a = np.linalg.lstsq(A, V[sel].mean(axis=1), rcond=None)[0][0]
        near = (idx == ip) & (r > 0)
        vals[near] -= a * p.chi(r[near]) * rh[near] ** gamma
        if gamma == 0:
            vals[(idx == ip) & (r == 0)] -= a
        coeffs.append(a)
    return meshmod.DiscreteFunction(mesh, vals, u.truncated_singular), coeffs


def angular_variation(V, ubar) -> float:
    """max |u(r, w) / ubar(r) - 1| over the sampled shells and directions."""
    return float(np.max(np.abs(V / ubar[:, None] - 1.0)))


def fit_oracle_mode(mode, r_lo: float, r_hi: float, n: int = 32) -> float:
    """Exponent fitted on samples of a radial oracle mode (should be nu - 1/2)."""
    from .radial_oracle import model_eigenfunction

    r = np.geomspace(r_lo, r_hi, n)
    return fit_power_law(r, model_eigenfunction(mode, r))[0]


# ---------------------------------------------------------------------------
# weighted regularity


@dataclass
class ProfileRow:
    a: float
    norms: tuple                 # K^1_{a+1} norms (incident tets excluded), coarse to fine
    increment_ratio: float
    verdict: str                 # bounded | growing


def weighted_regularity_profile(us: Sequence, spec: PotentialSpec, a_grid, growth_ratio: float = 0.9):
    """K^1_{a+1} norms of a refinement family and a bounded/growing verdict per a.

    Tets touching singular vertices are left out, so every norm is finite and
    the excluded ball shrinks under refinement. A norm that converges has
    shrinking increments; a divergent one has increments that hold or grow.
    Returns (rows, bracket) with bracket = (last bounded a, first growing a).
    """
    if len(us) < 3:
        raise ValueError("need >= 3 refinement levels")
    rows = []
    for a in a_grid:
        N = np.array([meshmod.weighted_norm(u, 1, a + 1, spec, exclude_incident=True) for u in us])
        d = np.diff(N)
        ratio = float(d[-1] / d[-2]) if d[-2] != 0 else math.inf
        growing = d[-1] > 0 and ratio >= growth_ratio
        rows.append(ProfileRow(float(a), tuple(float(x) for x in N), ratio, "growing" if growing else "bounded"))
    lo = max((r.a for r in rows if r.verdict == "bounded"), default=None)
    hi = min((r.a for r in rows if r.verdict == "growing"), default=None)
    return rows, (lo, hi)


# ---------------------------------------------------------------------------
# convergence rates


@dataclass
class RateReport:
    meshes: list                 # (h_max, dof, value, error)
    slope: float                 # error ~ (dof^{-1/3})^slope
    slope_h: float               # error ~ h_max^slope_h
    r2: float
    regime: str                  # uniform | graded
    reference: float
    reference_kind: str          # oracle | richardson
    preasymptotic: bool


def fit_rate(dofs, errors):
    """Slope of log error against log dof^{-1/3}, with r^2 of the fit."""
    x = -np.log(np.asarray(dofs, dtype=float)) / 3.0
    y = np.log(np.abs(np.asarray(errors, dtype=float)))
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - A @ coef) ** 2)) / ss if ss > 0 else 1.0
    return float(coef[0]), r2


def richardson(values, ratio: float = 2.0, order: Optional[float] = None):
    """Extrapolated limit from the last three values of a geometric refinement.

    The order is taken from the data (not assumed) unless given.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        raise ValueError("need >= 3 values")
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    if order is None:
        if d1 == 0 or d2 == 0 or d1 * d2 < 0:
            raise FitError("non-monotone sequence, no Richardson order")
        order = math.log(d1 / d2) / math.log(ratio)
    f = ratio**order
    return float(v[-1] + (v[-1] - v[-2]) / (f - 1)), float(order)


def convergence_study(meshes, spec: PotentialSpec, reference: Optional[float] = None,
                      regime: Optional[str] = None, opts=None, band: int = 0) -> RateReport:
    """Eigenvalue errors over a refinement family of ball meshes."""
    from .assemble import assemble_dirichlet
    from .eigensolve import EigenOptions, smallest_eigenpairs

    if len(meshes) < 3:
        raise ValueError("need >= 3 refinement levels")
    opts = opts or EigenOptions(n_eigs=band + 1)
    lams, rows = [], []
    for m in meshes:
        op = assemble_dirichlet(m, spec)
        res = smallest_eigenpairs(op, opts)
        lams.append(float(res.eigenvalues[band]))
        rows.append([m.h_max, op.n])
    kind = "oracle"
    if reference is None:
        reference, _ = richardson(lams)
        kind = "richardson"
    for row, lam in zip(rows, lams):
        row += [lam, lam - reference]
    err = [r[3] for r in rows]
    slope, r2 = fit_rate([r[1] for r in rows], err)
    slope_h = float(np.polyfit(np.log([r[0] for r in rows]), np.log(np.abs(err)), 1)[0])
    if regime is None:
        regime = "graded" if any(mu < 1 for mu in meshes[-1].mu) else "uniform"
    return RateReport([tuple(r) for r in rows], slope, slope_h, r2, regime, float(reference), kind,
                      r2 < PREASYMPTOTIC_R2)


# ---------------------------------------------------------------------------
# decay on truncated balls


def _sector_image(mesh, pts):
    if mesh.symmetry in (meshmod.OCTANT, meshmod.WEDGE):
        pts = np.abs(pts)
    if mesh.symmetry == meshmod.WEDGE:
        pts = -np.sort(-pts, axis=-1)
    return pts


def spherical_average(u, radii):
    """Mean of u over the 26 stencil directions at each radius about the origin."""
    dirs = meshmod.STENCIL / np.linalg.norm(meshmod.STENCIL, axis=1)[:, None]
    pts = np.asarray(radii, dtype=float)[:, None, None] * dirs[None]
    pts = _sector_image(u.mesh, pts.reshape(-1, 3))
    vals = u.at(pts).reshape(len(radii), len(dirs))
    return vals.mean(axis=1)


def fit_decay(r, ubar):
    """Slope of -log|ubar| against r."""
    return float(-np.polyfit(np.asarray(r, dtype=float), np.log(np.abs(ubar)), 1)[0])


def decay_fit(u, lam: float, spec: PotentialSpec, window=None, n_radii: int = 24):
    """(epsilon_hat, window): exponential decay rate of u on [R/2, 0.9R]."""
    v_inf = essential_spectrum_bound(spec)
    if lam >= v_inf:
        raise FitError(f"lambda = {lam:g} >= V_inf = {v_inf:g}: no decay predicted")
    R = spec.domain.radius
    lo, hi = window if window is not None else (0.5 * R, 0.9 * R)
    r = np.linspace(lo, hi, n_radii)
    ubar = spherical_average(u, r)
    return fit_decay(r, ubar), (lo, hi)


def fibonacci_directions(n: int = 200) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = math.pi * (1 + 5**0.5) * i
    s = np.sqrt(1 - z**2)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def essential_spectrum_bound(spec: PotentialSpec, n_dirs: int = 400) -> float:
    """inf over sampled directions of the radial limit of the smooth part."""
    # axis directions included: anisotropic limits peak or dip at the poles
    dirs = np.vstack([np.eye(3), -np.eye(3), fibonacci_directions(n_dirs)])
    lim = spec.smooth.radial_limit(dirs)
    if lim is None:
        raise DomainError(f"smooth field {spec.smooth.kind!r} declares no radial limit")
    return float(np.min(lim))
