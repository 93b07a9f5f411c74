"""Boundary spectral data of -Delta + Z/r^2 at a conical point in 3D.

Separating variables r^tau Y_lm turns the model operator into
tau^2 + tau - l(l+1) - Z, whose roots are

    beta_l  = (sqrt((1+2l)^2 + 4Z) - 1)/2,
    alpha_l = (-sqrt((1+2l)^2 + 4Z) - 1)/2 = -1 - beta_l.

In the shifted variable tau + 1/2 the roots are +-sqrt((l+1/2)^2 + Z).
When the discriminant is negative the square root denotes the root with
positive imaginary part.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .model import PotentialSpec

BETA = "beta"
ALPHA = "alpha"

# regimes of classify_extension
STRICT = "essentially_self_adjoint_strict"
BOUNDARY = "essentially_self_adjoint_boundary"
FRIEDRICHS = "friedrichs_one_singular_function"
DOUBLE_ROOT = "double_root_log"
IMAGINARY = "imaginary_root"

DEFAULT_L_MAX = 25


class WeightOnIndicialLine(ValueError):
    pass


class NotCovered(ValueError):
    """Inputs outside the range where the closed-form answer applies."""


def _sqrt_pos_imag(d):
    """sqrt with the positive-imaginary branch for negative arguments."""
    if d >= 0:
        return complex(math.sqrt(d), 0.0)
    return complex(0.0, math.sqrt(-d))


def _is_double(Z, l):
    """Z == -(l + 1/2)^2, tested exactly in the binary representation."""
    return Fraction(Z) == -Fraction(2 * l + 1, 2) ** 2


def shifted_root(Z: float, l: int) -> complex:
    """sqrt((l+1/2)^2 + Z); equals beta_l + 1/2."""
    return _sqrt_pos_imag((l + 0.5) ** 2 + Z)


def indicial_roots(Z: float, l: int):
    """(beta_l, alpha_l), both complex, with beta + alpha = -1."""
    if l < 0 or int(l) != l:
        raise ValueError("l must be a nonnegative integer")
    s = _sqrt_pos_imag((1 + 2 * l) ** 2 + 4 * Z)
    beta = (s - 1) / 2
    alpha = -1 - beta
    return beta, alpha


@dataclass(frozen=True)
class IndicialRoot:
    value: complex
    l: int
    kind: str
    pole_order_minus_one: int
    multiplicity: int

    @property
    def shifted(self) -> complex:
        return self.value + 0.5


@dataclass(frozen=True)
class BSpectrum:
    Z: float
    L_max: int
    roots: tuple
    eta: Optional[float]  # None in the complex regime Z <= -1/4
    nu0: float
    has_double_root: bool
    double_root_l: Optional[int]

    @property
    def complex_regime(self) -> bool:
        return self.eta is None

    def spec_b(self):
        """Distinct (value, n) pairs, n the pole order minus one."""
        out = []
        for r in self.roots:
            pair = (r.value, r.pole_order_minus_one)
            if pair not in out:
                out.append(pair)
        return out

    def roots_for(self, l):
        return [r for r in self.roots if r.l == l]


def boundary_spectrum(Z: float, L_max: int = DEFAULT_L_MAX) -> BSpectrum:
    if L_max < 0:
        raise ValueError("L_max must be >= 0")
    roots = []
    dbl = None
    for l in range(L_max + 1):
        beta, alpha = indicial_roots(Z, l)
        if _is_double(Z, l):
            dbl = l
            roots.append(IndicialRoot(complex(-0.5, 0.0), l, BETA, 1, 2 * l + 1))
        else:
            roots.append(IndicialRoot(beta, l, BETA, 0, 2 * l + 1))
            roots.append(IndicialRoot(alpha, l, ALPHA, 0, 2 * l + 1))
    e = math.sqrt(0.25 + Z) if Z > -0.25 else None
    return BSpectrum(float(Z), L_max, tuple(roots), e, nu0(Z), dbl is not None, dbl)


def nu0(Z: float) -> float:
    if Z >= 0.75:
        return 2.0
    if Z > -0.25:
        return 1.0 + math.sqrt(0.25 + Z)
    return 1.0


def eta(spec: PotentialSpec) -> float:
    """sqrt(1/4 + min_p Z(p)); infinite when there are no singular points."""
    spec.require_assumption2()
    if not spec.singular:
        return math.inf
    return math.sqrt(0.25 + spec.min_Z)


# ---------------------------------------------------------------------------
# extensions


@dataclass(frozen=True)
class LocalFunction:
    """Symbolic local function near p:

        chi * rho^(-1/2) * rho^power * [cos(freq log rho)] * Y_l

    With freq = 0 there is no oscillating factor; with power = -1/2 and
    freq = 0 it is the zero-root (double root) element.
    """

    exponent: float  # total real power of rho, -1/2 already included
    l: int
    freq: float = 0.0
    cutoff: str = "w"

    def evaluate(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = rho**self.exponent
        if self.freq:
            out = out * np.cos(self.freq * np.log(rho))
        return out

    def __str__(self):
        s = f"{self.cutoff}*rho^{self.exponent:.6g}"
        if self.freq:
            s += f"*cos({self.freq:.6g} log rho)"
        return s + (f"*Y_{self.l}" if self.l else "")


@dataclass(frozen=True)
class ExtensionClassification:
    Z: float
    regime: str
    domain_description: str
    extension_basis: tuple

    @property
    def essentially_self_adjoint(self) -> bool:
        return self.regime in (STRICT, BOUNDARY)


def classify_extension(Z: float) -> ExtensionClassification:
    Z = float(Z)
    if Z > 0.75:
        return ExtensionClassification(Z, STRICT, "K^2_2", ())
    if Z == 0.75:
        return ExtensionClassification(Z, BOUNDARY, "K^2_2 (l=0 shifted root on the strip edge)", ())
    if Z > -0.25:
        g = math.sqrt(0.25 + Z) - 0.5
        return ExtensionClassification(
            Z, FRIEDRICHS, "K^2_2 + C chi rho^{sqrt(1/4+Z)-1/2}", (LocalFunction(g, 0, cutoff="chi"),)
        )
    # Z <= -1/4: every l with a shifted root in [0, 1) in absolute value or purely
    # imaginary contributes local functions.
    basis = []
    for l in range(int(math.isqrt(int(math.ceil(1 - Z)))) + 2):
        t2 = (l + 0.5) ** 2 + Z
        if t2 < 0:
            basis.append(LocalFunction(-0.5, l, freq=math.sqrt(-t2)))
        elif t2 == 0:
            basis.append(LocalFunction(-0.5, l))
        elif t2 < 1:
            basis.append(LocalFunction(-0.5 + math.sqrt(t2), l))
    if Z == -0.25:
        return ExtensionClassification(Z, DOUBLE_ROOT, "K^2_2 + span{w rho^{-1/2} psi}", tuple(basis))
    return ExtensionClassification(
        Z, IMAGINARY, "K^2_2 + span{w rho^{-1/2} cos(a log rho) psi}", tuple(basis)
    )


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndexSet:
    Z: float
    re_cut: float
    exponents: tuple  # (gamma, l, n), sorted by real part

    def values(self):
        return sorted({g for g, _, _ in self.exponents}, key=lambda g: (g.real, g.imag))


def index_set(Z: float, re_cut: float, L_max: int = 1, n_max: int = 2) -> IndexSet:
    """{beta_l + n, alpha_l + n} for l <= L_max, n <= n_max, real part <= re_cut.

    The full set is infinite below re_cut (alpha_l + n is unbounded below as
    l grows), so both enumeration cutoffs are explicit.
    """
    for l in range(L_max + 1):
        if _is_double(Z, l):
            raise NotCovered("double indicial root: expansion has log terms, not covered")
    out = []
    for l in range(L_max + 1):
        beta, alpha = indicial_roots(Z, l)
        for n in range(n_max + 1):
            for g in (beta + n, alpha + n):
                if g.real <= re_cut + 1e-14:
                    out.append((g, l, n))
    out.sort(key=lambda t: (t[0].real, t[0].imag, t[1], t[2]))
    return IndexSet(float(Z), float(re_cut), tuple(out))


def auto_L_max(a: float) -> int:
    return int(math.ceil(abs(a))) + 1


def fredholm_index(Z: float, a: float, L_max: Optional[int] = None) -> int:
    """-N for a > 0, +N for a < 0, N = sum of (2l+1) over shifted roots in (0, |a|).

    Shifted roots are +-sqrt((l+1/2)^2 + Z); sqrt((l+1/2)^2 + Z) >= l for
    Z > -1/4, so L_max = ceil(|a|) + 1 already covers the window.
    """
    if not Z > -0.25:
        raise NotCovered("fredholm_index needs Z > -1/4 (real shifted roots)")
    if L_max is None:
        L_max = auto_L_max(a)
    if a == 0:
        return 0
    A = abs(a)
    N = 0
    for l in range(L_max + 1):
        t = math.sqrt((l + 0.5) ** 2 + Z)
        if t == A:
            raise WeightOnIndicialLine(f"weight a={a} lies on the shifted root of l={l}")
        if 0 < t < A:
            N += 2 * l + 1
    return -N if a > 0 else N


def fredholm_index_bruteforce(Z: float, a: float, L_max: int = 40) -> int:
    """Enumerate all shifted roots (both signs) and count those strictly between 0 and a."""
    lo, hi = min(0.0, a), max(0.0, a)
    N = 0
    for l in range(L_max + 1):
        b, al = indicial_roots(Z, l)
        for s in (b.real + 0.5, al.real + 0.5):
            if lo < s < hi:
                N += 2 * l + 1
    return -N if a > 0 else N


@dataclass(frozen=True)
class SingularGenerator:
    point_index: int
    Z: float
    exponent: float

    def __str__(self):
        return f"chi_{self.point_index} rho^{self.exponent:.10g}"


def singular_space_Ws(spec: PotentialSpec):
    """One generator chi_p rho^{sqrt(1/4+Z)-1/2} per point with Z in (-1/4, 3/4]."""
    spec.require_assumption2()
    return [
        SingularGenerator(i, p.Z, math.sqrt(0.25 + p.Z) - 0.5)
        for i, p in enumerate(spec.singular)
        if -0.25 < p.Z <= 0.75
    ]


def report(Z: float, L_max: int = 3, spec: Optional[PotentialSpec] = None) -> dict:
    """JSON-ready summary for one strength Z."""
    bs = boundary_spectrum(Z, L_max)
    cl = classify_extension(Z)
    rows = [
        {
            "l": r.l,
            "kind": r.kind,
            "re": r.value.real,
            "im": r.value.imag,
            "pole_order": r.pole_order_minus_one + 1,
            "multiplicity": r.multiplicity,
        }
        for r in bs.roots
    ]
    weights = [x / 2 for x in range(-4, 5)]
    fred = []
    for a in weights:
        try:
            fred.append({"a": a, "index": fredholm_index(Z, a)})
        except (NotCovered, WeightOnIndicialLine) as exc:
            fred.append({"a": a, "index": None, "error": str(exc)})
    out = {
        "Z": Z,
        "L_max": L_max,
        "roots": rows,
        "eta": bs.eta,
        "nu0": bs.nu0,
        "has_double_root": bs.has_double_root,
        "double_root_l": bs.double_root_l,
        "regime": cl.regime,
        "domain": cl.domain_description,
        "extension_basis": [str(b) for b in cl.extension_basis],
        "fredholm": fred,
    }
    if spec is not None:
        out["assumption2"] = spec.assumption2_satisfied
        if spec.assumption2_satisfied:
            out["W_s"] = [str(g) for g in singular_space_Ws(spec)]
    return out
