"""Domains, singular points, the weight function rho and the potential V.

The potential is

    V(x) = sum_p Z(p) chi_p(x) / rho(x)**2 + V_smooth(x),

with chi_p a C^2 cutoff equal to 1 near p. On the unit torus the lattice
is fixed to Z^3; other cubic lattices are handled by rescaling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class AssumptionViolation(ValueError):
    """min_p Z(p) <= -1/4: the Hardy-type lower bound is lost."""


class DomainError(ValueError):
    pass


TORUS = "torus"
BALL = "ball"


@dataclass(frozen=True)
class Domain:
    kind: str
    radius: float = 1.0  # ball radius; the torus side is fixed to 1

    def __post_init__(self):
        if self.kind not in (TORUS, BALL):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == TORUS and self.radius != 1.0:
            raise ValueError("torus side is fixed to 1")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @classmethod
    def torus(cls) -> "Domain":
        return cls(TORUS)

    @classmethod
    def ball(cls, radius: float) -> "Domain":
        return cls(BALL, float(radius))

    @property
    def volume(self) -> float:
        return 1.0 if self.kind == TORUS else 4.0 / 3.0 * math.pi * self.radius**3

    def displacement(self, x, y):
        """x - y, reduced to the nearest periodic image on the torus."""
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        if self.kind == TORUS:
            d = d - np.round(d)
        return d

    def distance(self, x, y):
        return np.linalg.norm(self.displacement(x, y), axis=-1)


def torus_distance(x, y):
    """Quotient distance on R^3 / Z^3 (minimum over the 27 neighbouring shifts)."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = d - np.round(d)
    return np.linalg.norm(d, axis=-1)


def smoothstep5(s):
    """Quintic with s=0 -> 0, s=1 -> 1 and vanishing first/second derivatives at both ends."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s**2)


@dataclass(frozen=True)
class CutoffProfile:
    """chi = 1 for r <= inner, 0 for r >= outer, quintic C^2 transition between."""

    inner: float
    outer: float
    degree: int = 5

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("cutoff profile needs 0 < inner < outer")
        if self.degree != 5:
            raise ValueError("only the quintic transition is implemented")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if math.isinf(self.outer):
            return np.ones_like(r)
        return 1.0 - smoothstep5((r - self.inner) / (self.outer - self.inner))

    @property
    def max_slope(self) -> float:
        return 15.0 / 8.0 / (self.outer - self.inner)


@dataclass(frozen=True)
class SingularPoint:
    """A point p with strength Z(p) = lim rho^2 V.

    cutoff_radius = inf is allowed on the ball for a point at the centre:
    then chi_p == 1 on the whole ball and V = Z/|x|^2 exactly (the setting of
    the separated radial model problem).
    """

    position: tuple
    Z: float
    cutoff_radius: float
    profile: Optional[CutoffProfile] = None

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "Z", float(self.Z))
        if len(self.position) != 3:
            raise ValueError("position must have three coordinates")
        if not self.cutoff_radius > 0:
            raise ValueError("cutoff_radius must be positive")
        if self.profile is None and not self.is_global:
            object.__setattr__(
                self, "profile", CutoffProfile(0.5 * self.cutoff_radius, self.cutoff_radius)
            )
        if self.profile is not None and self.profile.outer > self.cutoff_radius:
            raise ValueError("cutoff profile must end inside cutoff_radius")

    @property
    def is_global(self) -> bool:
        return math.isinf(self.cutoff_radius)

    @property
    def inner_radius(self) -> float:
        return math.inf if self.is_global else self.profile.inner

    def chi(self, r):
        r = np.asarray(r, dtype=float)
        if self.is_global:
            return np.ones_like(r)
        return self.profile(r)


# ---------------------------------------------------------------------------
# smooth parts of the potential


class SmoothField:
    """Base class for the smooth background V_smooth."""

    kind = "zero"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    def lower_bound(self) -> float:
        return 0.0

    @property
    def is_zero(self) -> bool:
        return True

    @property
    def is_constant(self) -> bool:
        return True

    def radial_limit(self, directions):
        """Limit of V along rays x = t*omega, t -> infinity, or None if not declared."""
        return None

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class ZeroField(SmoothField):
    def radial_limit(self, directions):
        return np.zeros(np.asarray(directions, dtype=float).shape[:-1])


@dataclass(frozen=True)
class TrigPolynomial(SmoothField):
    """c0 + sum a cos(2 pi n.x) + b sin(2 pi n.x), terms given as (n1, n2, n3, a, b)."""

    c0: float = 0.0
    terms: tuple = ()
    kind = "trig"

    def __post_init__(self):
        object.__setattr__(
            self,
            "terms",
            tuple((int(t[0]), int(t[1]), int(t[2]), float(t[3]), float(t[4])) for t in self.terms),
        )

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], float(self.c0))
        for n1, n2, n3, a, b in self.terms:
            ph = 2 * np.pi * (n1 * x[..., 0] + n2 * x[..., 1] + n3 * x[..., 2])
            out = out + a * np.cos(ph) + b * np.sin(ph)
        return out

    def lower_bound(self) -> float:
        return self.c0 - sum(abs(a) + abs(b) for *_, a, b in self.terms)

    @property
    def is_zero(self) -> bool:
        return self.c0 == 0 and not self.terms

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def radial_limit(self, directions):
        # periodic: a limit at infinity exists only for the constant
        if self.terms:
            return None
        return np.full(np.asarray(directions, dtype=float).shape[:-1], float(self.c0))

    def params(self) -> dict:
        return {"c0": self.c0, "terms": self.terms}


@dataclass(frozen=True)
class RadialWell(SmoothField):
    """Finite well: v_in for |x| < radius, v_out(omega) outside, tanh transition.

    v_out(omega) = v_out + anisotropy * omega_z**2 gives a direction-dependent
    limit at infinity.
    """

    v_in: float
    v_out: float
    radius: float
    width: float
    anisotropy: float = 0.0
    kind = "well"

    def _vout(self, omega):
        return self.v_out + self.anisotropy * omega[..., 2] ** 2

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)[..., None]
        omega = np.where(r[..., None] > 0, x / safe, 0.0)
        step = 0.5 * (1 + np.tanh((r - self.radius) / self.width))
        return self.v_in + (self._vout(omega) - self.v_in) * step

    def radial_profile(self, r):
        """V along the +x axis (anisotropy term vanishes there)."""
        r = np.asarray(r, dtype=float)
        return self.v_in + (self.v_out - self.v_in) * 0.5 * (1 + np.tanh((r - self.radius) / self.width))

    def lower_bound(self) -> float:
        return min(self.v_in, self.v_out, self.v_out + self.anisotropy)

    @property
    def is_zero(self) -> bool:
        return False

    @property
    def is_constant(self) -> bool:
        return False

    def radial_limit(self, directions):
        d = np.asarray(directions, dtype=float)
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        return self._vout(d)

    def params(self) -> dict:
        return {
            "v_in": self.v_in,
            "v_out": self.v_out,
            "radius": self.radius,
            "width": self.width,
            "anisotropy": self.anisotropy,
        }


@dataclass(frozen=True)
class CoulombTail(SmoothField):
    """-q / sqrt(|x|^2 + soft^2): smooth, tends to 0 at infinity."""

    q: float
    soft: float = 1.0
    kind = "coulomb"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return -self.q / np.sqrt((x**2).sum(-1) + self.soft**2)

    def radial_profile(self, r):
        return -self.q / np.sqrt(np.asarray(r, dtype=float) ** 2 + self.soft**2)

    def lower_bound(self) -> float:
        return min(0.0, -self.q / self.soft)

    @property
    def is_zero(self) -> bool:
        return self.q == 0

    @property
    def is_constant(self) -> bool:
        return self.q == 0

    def radial_limit(self, directions):
        d = np.asarray(directions, dtype=float)
        return np.zeros(d.shape[:-1])

    def params(self) -> dict:
        return {"q": self.q, "soft": self.soft}


SMOOTH_KINDS = {
    "zero": ZeroField,
    "trig": TrigPolynomial,
    "well": RadialWell,
    "coulomb": CoulombTail,
}


def constant_field(c: float) -> TrigPolynomial:
    return TrigPolynomial(c0=float(c))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialSpec:
    domain: Domain
    singular: tuple = ()
    smooth: SmoothField = field(default_factory=ZeroField)

    def __post_init__(self):
        object.__setattr__(self, "singular", tuple(self.singular))
        self._validate()

    def _validate(self):
        pts = self.singular
        for p in pts:
            if p.is_global:
                if self.domain.kind != BALL or len(pts) != 1 or any(p.position):
                    raise DomainError("an unbounded cutoff needs a single point at the ball centre")
        if self.domain.kind == TORUS:
            for p in pts:
                if p.cutoff_radius >= 0.5:
                    raise DomainError("cutoff support must not overlap its own periodic image")
        if self.domain.kind == BALL:
            for p in pts:
                if not p.is_global:
                    if np.linalg.norm(p.position) + p.cutoff_radius >= self.domain.radius:
                        raise DomainError("cutoff support must stay inside the ball")
        for i, p in enumerate(pts):
            for q in pts[i + 1:]:
                d = float(self.domain.distance(p.position, q.position))
                if max(p.cutoff_radius, q.cutoff_radius) >= d / 2:
                    raise DomainError("cutoff supports of distinct singular points overlap")

    @property
    def assumption2_satisfied(self) -> bool:
        return all(p.Z > -0.25 for p in self.singular)

    @property
    def min_Z(self) -> Optional[float]:
        return min((p.Z for p in self.singular), default=None)

    def require_assumption2(self):
        if not self.assumption2_satisfied:
            raise AssumptionViolation(
                f"min Z(p) = {self.min_Z} <= -1/4: the quadratic form is not bounded below "
                "on K^1_1 (Hardy constant exceeded)"
            )

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.singular], dtype=float).reshape(-1, 3)

    def nearest(self, x):
        """Index of and distance to the nearest singular point, vectorised over x."""
        x = np.asarray(x, dtype=float)
        if not self.singular:
            return np.full(x.shape[:-1], -1), np.full(x.shape[:-1], np.inf)
        dist = np.stack([self.domain.distance(x, p.position) for p in self.singular], axis=-1)
        idx = np.argmin(dist, axis=-1)
        return idx, np.take_along_axis(dist, idx[..., None], axis=-1)[..., 0]


def _chi_rho(x, spec: PotentialSpec):
    idx, r = spec.nearest(x)
    chi = np.zeros_like(r)
    for i, p in enumerate(spec.singular):
        sel = idx == i
        chi[sel] = p.chi(r[sel])
    return idx, r, chi


def rho(x, spec: PotentialSpec):
    """Regularised distance to the singular set.

    |x - p| inside the inner radius of chi_p, 1 outside all supports, and the
    blend chi*r + (1 - chi) in between.
    """
    x = np.asarray(x, dtype=float)
    if not spec.singular:
        return np.ones(x.shape[:-1])
    _, r, chi = _chi_rho(x, spec)
    return chi * r + (1 - chi)


def singular_part(x, spec: PotentialSpec):
    """sum_p Z(p) chi_p / rho^2, raising at a singular point."""
    x = np.asarray(x, dtype=float)
    if not spec.singular:
        return np.zeros(x.shape[:-1])
    idx, r, chi = _chi_rho(x, spec)
    if np.any((r == 0) & (chi > 0)):
        raise DomainError("potential evaluated at a singular point")
    Z = np.array([p.Z for p in spec.singular])[idx]
    rh = chi * r + (1 - chi)
    return Z * chi / rh**2


def eval_potential(x, spec: PotentialSpec):
    """V(x), vectorised over the leading axes of x."""
    return singular_part(x, spec) + spec.smooth(x)


def regular_factor(x, spec: PotentialSpec, power: float, p_index: int):
    """(rho / |x - p|)**power near point p: bounded, equals 1 inside the inner radius."""
    p = spec.singular[p_index]
    r = spec.domain.distance(x, p.position)
    chi = p.chi(r)
    rh = chi * r + (1 - chi)
    return (rh / r) ** power
