"""Exact radial eigenpairs of -u'' - (2/r)u' + (Z + l(l+1))/r^2 u = lambda u on (0, R).

With Dirichlet data at R and the regular (Friedrichs) branch at 0 the
eigenfunctions are r^{-1/2} J_nu(sqrt(lambda) r), nu = sqrt((l+1/2)^2 + Z),
and lambda = (j_{nu,k}/R)^2.

J_nu is evaluated independently of scipy.special: a log-space power series
near the origin, and a high-order ODE integration of Bessel's equation
beyond. A second, fully discrete oracle (graded finite differences for
w = r u) is provided as well.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import cho_solve_banded, cholesky_banded, eigh_tridiagonal
from scipy.optimize import brentq

SERIES = "series"
ODE = "ode"

NU_MAX = 60.0
X_MAX = 200.0


class OscillatoryRegime(ValueError):
    pass


class BracketError(RuntimeError):
    pass


def series_cutoff(nu: float) -> float:
    """Series used for x <= max(12, 0.6 nu), the ODE beyond.

    Past x ~ nu the alternating series loses ~e^{x-...} digits to
    cancellation; starting the ODE much below nu puts it where Y_nu dominates.
    0.6 nu balances the two (about 2e-9 absolute at nu = 60).
    """
    return max(12.0, 0.6 * nu)


def _check(nu, x):
    if not 0 <= nu <= NU_MAX:
        raise ValueError(f"nu={nu} outside [0, {NU_MAX}]")
    if np.any(x < 0) or np.any(x > X_MAX):
        raise ValueError(f"x outside [0, {X_MAX}]")


def _series_terms(nu, x, deriv=False):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    if xp.size:
        lh = np.log(xp / 2)
        acc = np.zeros_like(xp)
        for m in range(400):
            a = nu + 2 * m
            lt = a * lh - math.lgamma(m + 1) - math.lgamma(nu + m + 1)
            if deriv:
                if a == 0:
                    continue
                lt = lt + math.log(a) - math.log(2) - lh
            t = np.exp(lt)
            acc += -t if m % 2 else t
            if m > 2 and np.all(t < 1e-18 * np.maximum(np.abs(acc), 1e-300)) and m > np.max(xp):
                break
        out[pos] = acc
    if not deriv:
        out[x == 0] = 1.0 if nu == 0 else 0.0
    else:
        out[x == 0] = 0.5 if nu == 1 else (math.inf if 0 < nu < 1 else 0.0)
    return out


def bessel_j_series(nu, x):
    return _series_terms(nu, x)


def bessel_jp_series(nu, x):
    return _series_terms(nu, x, deriv=True)


@lru_cache(maxsize=64)
def _ode_solution(nu: float, x0: float, x1: float):
    y0 = [bessel_j_series(nu, x0)[0], bessel_jp_series(nu, x0)[0]]

    def rhs(x, y):
        return [y[1], -y[1] / x - (1 - nu * nu / (x * x)) * y[0]]

    return solve_ivp(rhs, (x0, x1), y0, method="DOP853", rtol=1e-13, atol=1e-16, dense_output=True)


def bessel_j_ode(nu, x, x0=None):
    """J_nu(x) by integrating Bessel's equation from x0 (series start values)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x0 = series_cutoff(nu) if x0 is None else float(x0)
    if np.any(x < x0):
        raise ValueError("ODE branch only for x >= x0")
    sol = _ode_solution(float(nu), x0, X_MAX)
    return sol.sol(x)[0]


def bessel_j(nu: float, x, tol: float = 1e-12):
    """J_nu(x) for 0 <= nu <= 60, 0 <= x <= 200 (vectorised in x)."""
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check(nu, x)
    xc = series_cutoff(nu)
    out = np.empty_like(x)
    near = x <= xc
    out[near] = bessel_j_series(nu, x[near])
    if np.any(~near):
        out[~near] = bessel_j_ode(nu, x[~near])
    return out[0] if scalar else out


def bessel_zero(nu: float, k: int) -> float:
    """k-th positive zero of J_nu: sign changes on a fine grid, then brentq."""
    if k < 1:
        raise ValueError("k >= 1")
    hi = min(X_MAX, (k + nu / 2 + 2) * math.pi + 2)
    grid = np.arange(max(1e-3, nu * 0.9), hi, 0.05)
    vals = bessel_j(nu, grid)
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if len(idx) < k:
        raise BracketError(f"found {len(idx)} sign changes of J_{nu} on [{grid[0]:.3g}, {grid[-1]:.3g}], need {k}")
    i = idx[k - 1]
    f = lambda t: float(bessel_j(nu, t))
    return brentq(f, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15, maxiter=200)


def nu_of(Z: float, l: int) -> float:
    if not Z > -0.25:
        raise OscillatoryRegime(
            "Z <= -1/4: oscillatory regime, no Friedrichs ground state selection implemented"
        )
    return math.sqrt((l + 0.5) ** 2 + Z)


def model_eigenvalue(Z: float, l: int, k: int, R: float) -> float:
    nu = nu_of(Z, l)
    return (bessel_zero(nu, k) / R) ** 2


@dataclass(frozen=True)
class RadialMode:
    l: int
    k: int
    Z: float
    R: float
    nu: float
    lam: float
    normalization: float

    @property
    def beta(self) -> float:
        """Frobenius exponent at r = 0."""
        return self.nu - 0.5

    def __call__(self, r):
        return model_eigenfunction(self, r)


def radial_mode(Z: float, l: int, k: int, R: float) -> RadialMode:
    nu = nu_of(Z, l)
    j = bessel_zero(nu, k)
    # int_0^R r J_nu(j r / R)^2 dr = R^2/2 J_{nu+1}(j)^2
    jn1 = float(bessel_j(nu + 1, j))
    c = 1.0 / (R * abs(jn1) / math.sqrt(2))
    return RadialMode(l, k, float(Z), float(R), nu, (j / R) ** 2, c)


def model_eigenfunction(mode: RadialMode, r):
    """r^{-1/2} J_nu(sqrt(lambda) r), normalised in L^2(r^2 dr) on (0, R)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r > mode.R * (1 + 1e-14)):
        raise ValueError("0 < r <= R required")
    x = np.minimum(math.sqrt(mode.lam) * r, math.sqrt(mode.lam) * mode.R)
    return mode.normalization * bessel_j(mode.nu, x) / np.sqrt(r)


def leading_coefficient(mode: RadialMode) -> float:
    """lim u(r) / r^{nu - 1/2} as r -> 0."""
    return mode.normalization * (math.sqrt(mode.lam) / 2) ** mode.nu / math.gamma(mode.nu + 1)


# ---------------------------------------------------------------------------
# discrete second oracle


def graded_grid(R: float, n: int, mu: float) -> np.ndarray:
    return R * (np.arange(n + 1) / n) ** (1.0 / mu)


@dataclass(frozen=True)
class FDResult:
    r: np.ndarray          # interior nodes r_1 .. r_{n-1}
    lam: np.ndarray
    u: np.ndarray          # u = w / r at the nodes, columns normalised in L^2(r^2 dr)


def _refine(d, e, lam, vec, k, max_sweeps=200):
    """Subspace inverse iteration on T + sigma with a banded Cholesky.

    eigh_tridiagonal is accurate to eps*||T|| only, and ||T|| grows like the
    inverse square of the smallest cell on a graded grid. Eigenvalues from the
    projected inverse are relatively accurate instead.
    """
    sigma = 0.0
    while True:
        ab = np.zeros((2, len(d)))
        ab[0, 1:] = e
        ab[1] = d + sigma
        try:
            c = cholesky_banded(ab)
            break
        except np.linalg.LinAlgError:
            sigma = max(2 * sigma, 1.0, -2 * float(lam[0]))
    V = vec
    prev = None
    for _ in range(max_sweeps):
        Y = cho_solve_banded((c, False), V)
        Q, _ = np.linalg.qr(Y)
        W = cho_solve_banded((c, False), Q)
        theta, S = np.linalg.eigh(Q.T @ W)
        order = np.argsort(-theta)
        theta, S = theta[order], S[:, order]
        V = Q @ S
        if prev is not None and np.all(np.abs(theta[:k] - prev[:k]) <= 1e-14 * theta[:k]):
            break
        prev = theta
    return 1.0 / theta[:k] - sigma, V[:, :k]


def fd_radial_solve(Z: float, l: int, R: float, n: int, mu: float = 1.0, n_eigs: int = 1,
                    extra: Optional[Callable] = None) -> FDResult:
    """Lumped P1 (three-point) scheme for w = r u on the graded grid R (j/n)^{1/mu}.

    The first cell [0, r_1] uses w = w_1 (r/r_1)^p with p = nu + 1/2 (the regular
    Frobenius branch), which contributes exactly p/r_1 to the energy and
    r_1/(2p+1) to the mass. `extra` is an optional additional radial potential.
    """
    if n < 16:
        raise ValueError("n >= 16")
    nu = nu_of(Z, l)
    p = nu + 0.5
    q0 = nu * nu - 0.25
    r = graded_grid(R, n, mu)
    h = np.diff(r)                      # h[j] = r[j+1] - r[j]
    ri = r[1:-1]
    m = 0.5 * (h[:-1] + h[1:])          # lumped mass on [r1, R]
    # dual cells [a_j, b_j]; node 1 owns only [r_1, b_1], its left cell is the
    # exact power-law cell below
    a = ri - 0.5 * h[:-1]
    a[0] = r[1]
    b = ri + 0.5 * h[1:]
    diag = 1.0 / h[:-1] + 1.0 / h[1:] + q0 * (1.0 / a - 1.0 / b)
    off = -1.0 / h[1:-1]
    r1 = r[1]
    diag[0] = p / r1 + 1.0 / h[1] + q0 * (1.0 / a[0] - 1.0 / b[0])
    m[0] = r1 / (2 * p + 1) + 0.5 * h[1]
    if extra is not None:
        diag = diag + extra(ri) * m
    s = 1.0 / np.sqrt(m)
    d = diag * s * s
    e = off * s[:-1] * s[1:]
    k = min(n_eigs, len(d))
    kb = min(2 * k + 4, len(d))         # guard vectors speed up the refinement
    lam, vec = eigh_tridiagonal(d, e, select="i", select_range=(0, kb - 1))
    lam, vec = _refine(d, e, lam, vec, k)
    w = vec * s[:, None]                # back to w-coefficients, sum m w^2 = 1
    u = w / ri[:, None]
    sgn = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(k)])
    return FDResult(ri, lam, u * sgn)


def fd_radial_eigenvalue(Z: float, l: int, k: int, R: float, n: int, mu: float = 1.0) -> float:
    return float(fd_radial_solve(Z, l, R, n, mu, n_eigs=k).lam[k - 1])


def oracle_table(Zs, ls, ks, R):
    rows = []
    for Z in Zs:
        for l in ls:
            for k in ks:
                nu = nu_of(Z, l)
                j = bessel_zero(nu, k)
                rows.append((Z, l, k, nu, j, (j / R) ** 2))
    return rows


def count_below(Z: float, Lam: float, R: float, L: int) -> int:
    """Number of model eigenvalues < Lam with l <= L, counted with multiplicity 2l+1."""
    total = 0
    for l in range(L + 1):
        nu = nu_of(Z, l)
        jmax = math.sqrt(Lam) * R
        k = 0
        while True:
            if jmax <= nu:
                break
            try:
                j = bessel_zero(nu, k + 1)
            except BracketError:
                break
            if j >= jmax:
                break
            k += 1
        total += k * (2 * l + 1)
    return total
