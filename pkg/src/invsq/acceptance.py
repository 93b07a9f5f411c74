"""Acceptance suite: ten numbered criteria, each a function returning a Result.

    python -m invsq.acceptance [1,2,...]     or     invsq verify [--criteria 1,2]

prints one PASS/FAIL line per criterion.
"""
from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import analyze, bspec
from .assemble import CertificationError, assemble_dirichlet, assemble_hk, coercive_shift, hardy_quotient
from .eigensolve import EigenOptions, smallest_eigenpairs
from .mesh import build_ball_mesh, build_torus_mesh
from .model import (
    AssumptionViolation,
    Domain,
    PotentialSpec,
    RadialWell,
    SingularPoint,
    TrigPolynomial,
)
from .radial_oracle import bessel_zero, fd_radial_solve, model_eigenvalue


@dataclass
class Result:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0
    limit: float = math.inf

    def line(self) -> str:
        t = f"{self.seconds:.1f} s" + (f" / {self.limit:.0f} s" if math.isfinite(self.limit) else "")
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.title} ({t}): {self.detail}"


def ball_spec(Z, R=math.pi):
    return PotentialSpec(Domain.ball(R), (SingularPoint((0.0, 0.0, 0.0), Z, math.inf),))


def wedge_mesh(Z, n, mu, R=math.pi, grading_radius=1.0):
    spec = ball_spec(Z, R)
    return build_ball_mesh(R, n, mu=mu, grading_radius=grading_radius, spec=spec, symmetry="wedge"), spec


def ground_state(mesh, spec, tol=1e-8):
    op = assemble_dirichlet(mesh, spec)
    return smallest_eigenpairs(op, EigenOptions(n_eigs=1, tol=tol))


# ---------------------------------------------------------------------------


def criterion_1(seed=1):
    rng = np.random.default_rng(seed)
    worst_sum = worst_prod = 0.0
    for _ in range(200):
        Z = float(rng.uniform(-0.25, 4.0))
        while Z == -0.25:
            Z = float(rng.uniform(-0.25, 4.0))
        l = int(rng.integers(0, 11))
        b, a = bspec.indicial_roots(Z, l)
        worst_sum = max(worst_sum, abs(b + a + 1))
        worst_prod = max(worst_prod, abs(b * a + (l * (l + 1) + Z)))
    below = bspec.classify_extension(0.75 - 1e-9).regime
    above = bspec.classify_extension(0.75 + 1e-9).regime
    ok = worst_sum <= 1e-12 and worst_prod <= 1e-12 and below == bspec.FRIEDRICHS and above == bspec.STRICT
    return ok, f"max|b+a+1| = {worst_sum:.1e}, max|ba+l(l+1)+Z| = {worst_prod:.1e}, regimes {below} / {above}"


def criterion_2():
    s = bspec.boundary_spectrum(-0.25, 3)
    d = [r for r in s.roots if r.pole_order_minus_one == 1]
    ok1 = len(d) == 1 and d[0].l == 0 and d[0].value == complex(-0.5, 0) and s.spec_b()[0] == (complex(-0.5, 0), 1)
    s2 = bspec.boundary_spectrum(-2.25, 3)
    l0 = s2.roots_for(0)
    l1 = s2.roots_for(1)
    ok2 = (s2.double_root_l == 1 and len(l1) == 1 and l1[0].value == complex(-0.5, 0)
           and l1[0].pole_order_minus_one == 1)
    ok3 = (len(l0) == 2 and all(r.value.real == -0.5 for r in l0)
           and sorted(r.value.imag for r in l0) == [-math.sqrt(2), math.sqrt(2)])
    return ok1 and ok2 and ok3, (f"Z=-1/4: {[(r.value, r.pole_order_minus_one + 1) for r in d]}; "
                                 f"Z=-9/4: l=1 double {ok2}, l=0 {[r.value for r in l0]}")


def criterion_3():
    errs = [abs(model_eigenvalue(0.0, 0, k, math.pi) - k * k) for k in range(1, 6)]
    x = brentq(lambda t: math.tan(t) - t, math.pi + 0.1, 1.5 * math.pi - 1e-9, xtol=1e-15, rtol=1e-15)
    dj = abs(bessel_zero(1.5, 1) - x)
    return max(errs) <= 1e-10 and dj <= 1e-9, f"max|lambda_k - k^2| = {max(errs):.1e}, |j_3/2,1 - tan root| = {dj:.1e}"


def criterion_4():
    spec = PotentialSpec(Domain.torus())
    out = []
    ok = True
    four_pi2 = 4 * math.pi**2
    for n, lim in ((16, 0.05), (32, 0.015)):
        m = build_torus_mesh(spec, n)
        res = smallest_eigenpairs(assemble_hk(m, spec, (0, 0, 0)), EigenOptions(n_eigs=7))
        lam = res.eigenvalues
        dev = float(np.max(np.abs(lam[1:7] / four_pi2 - 1)))
        ok &= abs(lam[0]) < 1e-10 and dev <= lim and res.all_converged
        out.append(f"n={n}: lambda1={lam[0]:.1e}, max dev {dev:.4f}")
    m = build_torus_mesh(spec, 16)
    res = smallest_eigenpairs(assemble_hk(m, spec, (math.pi, 0, 0)), EigenOptions(n_eigs=1))
    dk = abs(res.eigenvalues[0] / math.pi**2 - 1)
    ok &= dk <= 0.05
    out.append(f"k=(pi,0,0): rel dev {dk:.4f}")
    return ok, "; ".join(out)


def criterion_5(ns=(32, 64, 128)):
    Z = 2.0
    ref = model_eigenvalue(Z, 0, 1, math.pi)
    from .mesh import default_mu

    mu = default_mu(Z)
    meshes = [wedge_mesh(Z, n, mu)[0] for n in ns]
    rep = analyze.convergence_study(meshes, ball_spec(Z), reference=ref)
    errs = [r[3] for r in rep.meshes]
    ok = 1.6 <= rep.slope <= 2.2 and all(e > 0 for e in errs)
    return ok, f"mu={mu}, errors {', '.join(f'{e:.2e}' for e in errs)}, slope {rep.slope:.3f} (r2 {rep.r2:.3f})"


def criterion_6(n=128):
    out = []
    ok = True
    for Z, mu, target, tol in ((2.0, 1.0, 1.0, 0.05), (-0.1875, 0.2, -0.25, 0.03)):
        m, spec = wedge_mesh(Z, n, mu)
        res = ground_state(m, spec)
        fit = analyze.fit_singular_exponent(res.function(0))
        good = abs(fit.slope - target) <= tol and fit.angular_variation < 0.05
        ok &= good
        out.append(f"Z={Z}: slope {fit.slope:.4f} (target {target}), angular variation {fit.angular_variation:.1e}")
    return ok, "; ".join(out)


def criterion_7(ns=(64, 128, 256)):
    Z = -0.1875
    ref = model_eigenvalue(Z, 0, 1, math.pi)
    reps = {}
    for mu in (1.0, 0.2):
        reps[mu] = analyze.convergence_study([wedge_mesh(Z, n, mu)[0] for n in ns], ball_spec(Z), reference=ref)
    su, sg = reps[1.0].slope, reps[0.2].slope
    dofs_equal = [a[1] for a in reps[1.0].meshes] == [b[1] for b in reps[0.2].meshes]
    ok = 0.35 <= su <= 0.7 and sg >= 1.5 and dofs_equal
    eu = ", ".join(f"{r[3]:.2e}" for r in reps[1.0].meshes)
    eg = ", ".join(f"{r[3]:.2e}" for r in reps[0.2].meshes)
    return ok, f"uniform slope {su:.3f} [{eu}]; graded slope {sg:.3f} [{eg}]; equal dofs {dofs_equal}"


def criterion_8(ns=(8, 12, 16)):
    qs = []
    for n in ns:
        spec = ball_spec(1.0, 1.0)
        m = build_ball_mesh(1.0, n, spec=spec)
        qs.append(hardy_quotient(assemble_dirichlet(m, spec))[0])
    okh = max(qs) <= 4.2
    cert = []
    configs = [
        ("ball Z=-3/16", ball_spec(-0.1875), lambda s: build_ball_mesh(math.pi, 16, mu=0.2, grading_radius=1.0,
                                                                       spec=s, symmetry="wedge")),
        ("ball Z=2", ball_spec(2.0), lambda s: build_ball_mesh(math.pi, 16, spec=s, symmetry="wedge")),
        ("torus Z=-0.2", PotentialSpec(Domain.torus(), (SingularPoint((0.5, 0.5, 0.5), -0.2, 0.3),)),
         lambda s: build_torus_mesh(s, 16)),
        ("torus Z=0.5 + trig min -5", PotentialSpec(Domain.torus(), (SingularPoint((0.5, 0.5, 0.5), 0.5, 0.3),),
                                                     TrigPolynomial(-2.0, ((1, 0, 0, 3.0, 0.0),))),
         lambda s: build_torus_mesh(s, 16)),
    ]
    okc = True
    for name, spec, mk in configs:
        m = mk(spec)
        op = assemble_dirichlet(m, spec) if m.kind == "ball" else assemble_hk(m, spec, (0, 0, 0))
        try:
            C = coercive_shift(spec, op)
            cert.append(f"{name}: C={C:g}")
        except CertificationError as exc:
            okc = False
            cert.append(f"{name}: {exc}")
    bad = ball_spec(-0.5)
    try:
        m = build_ball_mesh(math.pi, 8, spec=bad, symmetry="wedge")
        coercive_shift(bad, assemble_dirichlet(m, bad))
        okb = False
        cert.append("Z=-0.5 certified (unexpected)")
    except AssumptionViolation:
        okb = True
        cert.append("Z=-0.5 refused")
    return okh and okc and okb, f"Hardy quotients {', '.join(f'{q:.3f}' for q in qs)}; " + "; ".join(cert)


def criterion_9():
    bad = []
    for Z in (0.0, 0.5, 2.0):
        for a in (0.3, 1.0, 2.0):
            for s in (a, -a):
                if bspec.fredholm_index(Z, s) != bspec.fredholm_index_bruteforce(Z, s):
                    bad.append((Z, s))
            if bspec.fredholm_index(Z, a) != -bspec.fredholm_index(Z, -a):
                bad.append(("antisymmetry", Z, a))
    table = [bspec.fredholm_index(2.0, a) for a in (-2, -1, -0.3, 0.3, 1, 2)]
    return not bad, f"mismatches {bad}; Z=2, a=-2..2: {table}"


def criterion_10(n=96, R=6.0, core=2.8, width=0.1):
    out = []
    ok = True
    eps = {}
    for v_inf in (25.0, 100.0):
        well = RadialWell(0.0, v_inf, core, width)
        spec = PotentialSpec(Domain.ball(R), (), well)
        m = build_ball_mesh(R, n, spec=spec, symmetry="wedge")
        res = ground_state(m, spec)
        lam = float(res.eigenvalues[0])
        e_fem, win = analyze.decay_fit(res.function(0), lam, spec)
        fd = fd_radial_solve(0.0, 0, R, 6000, extra=well.radial_profile)
        sel = (fd.r >= win[0]) & (fd.r <= win[1])
        e_fd = analyze.fit_decay(fd.r[sel], fd.u[sel, 0])
        rel_l = abs(lam / fd.lam[0] - 1)
        rel_e = abs(e_fem / e_fd - 1)
        eps[v_inf] = e_fem
        ok &= e_fem > 0 and rel_e <= 0.2 and lam < v_inf
        if v_inf == 25.0:
            ok &= rel_l <= 0.02
        out.append(f"V_inf={v_inf:g}: lambda {lam:.4f} vs 1D {fd.lam[0]:.4f}, eps_hat {e_fem:.3f} vs 1D {e_fd:.3f} "
                   f"(gap {v_inf - lam:.3f}, sqrt gap {math.sqrt(v_inf - lam):.3f})")
    ok &= eps[100.0] > eps[25.0]
    return ok, "; ".join(out)


CRITERIA = {
    1: ("indicial algebra", criterion_1, 1.0),
    2: ("Spec_b special cases", criterion_2, math.inf),
    3: ("radial oracle sanity", criterion_3, 1.0),
    4: ("free-torus bands", criterion_4, 120.0),
    5: ("Z=2 eigenvalue rate vs oracle", criterion_5, 600.0),
    6: ("singular exponent fits", criterion_6, 600.0),
    7: ("pollution and cure", criterion_7, 900.0),
    8: ("Hardy quotient and coercivity", criterion_8, 300.0),
    9: ("Fredholm index vs enumeration", criterion_9, math.inf),
    10: ("exponential decay", criterion_10, 300.0),
}


def run(number: int) -> Result:
    title, fn, limit = CRITERIA[number]
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # reported as a failed criterion
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    dt = time.perf_counter() - t0
    if dt > limit:
        ok, detail = False, f"over the {limit:g} s budget; {detail}"
    return Result(number, title, bool(ok), detail, dt, limit)


def run_all(numbers=None, stream=None):
    stream = stream or sys.stdout
    out = []
    for k in numbers or sorted(CRITERIA):
        r = run(k)
        print(r.line(), file=stream, flush=True)
        out.append(r)
    return out


if __name__ == "__main__":
    nums = [int(x) for x in sys.argv[1].split(",")] if len(sys.argv) > 1 else None
    sys.exit(0 if all(r.passed for r in run_all(nums)) else 1)
