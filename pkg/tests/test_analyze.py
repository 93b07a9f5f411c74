import math

import numpy as np
import pytest

from invsq import analyze as an
from invsq.mesh import build_ball_mesh, build_torus_mesh, interpolate
from invsq.model import (CoulombTail, Domain, DomainError, PotentialSpec, RadialWell, SingularPoint,
                         TrigPolynomial, ZeroField)
from invsq.radial_oracle import model_eigenfunction, radial_mode


def ball_spec(Z, R=math.pi, smooth=None):
    return PotentialSpec(Domain.ball(R), (SingularPoint((0, 0, 0), Z, math.inf),), smooth or ZeroField())


def radial_interpolant(mesh, f):
    def g(X):
        r = np.linalg.norm(X, axis=1)
        out = np.zeros(len(X))
        out[r > 0] = f(r[r > 0])
        return out
    return interpolate(g, mesh)


def test_fit_power_law_with_curvature():
    r = np.geomspace(0.05, 0.8, 20)
    g, c, r2, plain = an.fit_power_law(r, 1.7 * r**0.75 * np.exp(-0.4 * r**2))
    assert g == pytest.approx(0.75, abs=1e-12) and c == pytest.approx(math.log(1.7), abs=1e-12)
    assert r2 == pytest.approx(1.0) and abs(plain - 0.75) > 0.05
    # a truncated even expansion is absorbed to leading order
    g, *_ = an.fit_power_law(r / 2, 1.7 * (r / 2) ** 0.75 * (1 - 0.4 * (r / 2) ** 2))
    assert g == pytest.approx(0.75, abs=1e-3)


def test_synthetic_power_on_mesh():
    spec = ball_spec(0.0)
    m = build_ball_mesh(math.pi, 32, mu=0.5, grading_radius=1.0, spec=spec, symmetry="wedge")
    fit = an.fit_singular_exponent(radial_interpolant(m, lambda r: r**0.75), window=(0.02, 1.0))
    assert fit.slope == pytest.approx(0.75, abs=1e-3)
    assert fit.n_radii >= an.MIN_RADII and fit.angular_variation < 1e-12
    lo, hi = fit.window
    lo, hi = an.default_window(m)
    assert lo == m.layer_r[0][3] and hi == pytest.approx(math.pi / 3)


def test_subtract_singular_part_recovers_coefficient():
    # u = 1.7 r^{-1/4} + 0.3 r^{7/4} for Z = -3/16 (gamma = -1/4)
    spec = ball_spec(-0.1875)
    m = build_ball_mesh(math.pi, 32, mu=0.5, grading_radius=1.0, spec=spec, symmetry="wedge")
    u = radial_interpolant(m, lambda r: 1.7 * r**-0.25 + 0.3 * r**1.75)
    rem, (a,) = an.subtract_singular_part(u, window=(0.02, 1.0))
    assert a == pytest.approx(1.7, rel=1e-10)
    away = np.linalg.norm(m.vertices, axis=1) > 0
    assert np.allclose(rem.values[away], 0.3 * np.linalg.norm(m.vertices[away], axis=1) ** 1.75, atol=1e-9)


@pytest.mark.parametrize("Z", [-0.1875, 0.0, 0.5, 2.0])
@pytest.mark.parametrize("l", [0, 1, 2])
def test_oracle_modes_close_the_loop(Z, l):
    mode = radial_mode(Z, l, 1, math.pi)
    assert an.fit_oracle_mode(mode, 1e-3, 0.3) == pytest.approx(mode.nu - 0.5, abs=1e-3)


def test_angular_negative_control():
    # l = 0 mode plus an injected l = 1 mode: angular variation stays O(1)
    Z = 2.0
    m0, m1 = radial_mode(Z, 0, 1, math.pi), radial_mode(Z, 1, 1, math.pi)
    spec = ball_spec(Z)
    vals = []
    for n in (24, 32):
        mesh = build_ball_mesh(math.pi, n, mu=0.5, grading_radius=1.0, spec=spec)

        def f(X):
            r = np.linalg.norm(X, axis=1)
            out = np.zeros(len(X))
            k = r > 0
            out[k] = model_eigenfunction(m0, r[k]) + 0.5 * model_eigenfunction(m1, r[k]) * X[k, 0] / r[k]
            return out

        vals.append(an.fit_singular_exponent(interpolate(f, mesh), window=(0.02, 1.5)).angular_variation)
    assert min(vals) > 0.1
    # the pure l = 0 mode has exact spherical shells
    mesh = build_ball_mesh(math.pi, 32, mu=0.5, grading_radius=1.0, spec=spec)
    fit = an.fit_singular_exponent(radial_interpolant(mesh, lambda r: model_eigenfunction(m0, r)),
                                   window=(0.02, 1.0))
    assert fit.angular_variation < 1e-12 and fit.slope == pytest.approx(1.0, abs=5e-3)


def test_fit_window_too_small():
    spec = ball_spec(0.0)
    m = build_ball_mesh(math.pi, 8, spec=spec, symmetry="wedge")
    with pytest.raises(an.FitError):
        an.fit_singular_exponent(radial_interpolant(m, lambda r: r))


def test_vanishing_near_point_reported():
    spec = ball_spec(0.0)
    m = build_ball_mesh(math.pi, 32, mu=0.5, grading_radius=1.0, spec=spec, symmetry="wedge")
    u = radial_interpolant(m, lambda r: np.where(r > 2.0, r - 2.0, 0.0))
    fit = an.fit_singular_exponent(u, window=(0.02, 1.0))
    assert fit.vanishes and math.isnan(fit.slope)


def test_fit_rate_and_richardson():
    dofs = np.array([1e3, 8e3, 6.4e4])
    err = 3.0 * dofs ** (-2 / 3)
    s, r2 = an.fit_rate(dofs, err)
    assert s == pytest.approx(2.0, abs=1e-12) and r2 == pytest.approx(1.0)
    vals = [1.5 + 0.7 * 4.0**-j for j in range(4)]
    lim, order = an.richardson(vals)
    assert lim == pytest.approx(1.5, abs=1e-12) and order == pytest.approx(2.0, abs=1e-10)
    with pytest.raises(an.FitError):
        an.richardson([1.0, 2.0, 1.5])


def test_convergence_study_free_ball():
    spec = PotentialSpec(Domain.ball(math.pi))
    meshes = [build_ball_mesh(math.pi, n, symmetry="wedge") for n in (8, 16, 32)]
    rep = an.convergence_study(meshes, spec, reference=1.0)
    errs = [row[3] for row in rep.meshes]
    assert all(e > 0 for e in errs)
    assert rep.slope == pytest.approx(2.0, abs=0.3) and rep.regime == "uniform"
    assert rep.reference_kind == "oracle" and not rep.preasymptotic
    rep2 = an.convergence_study(meshes, spec)
    assert rep2.reference_kind == "richardson" and rep2.reference == pytest.approx(1.0, abs=0.02)


def _profile(Z, a_grid, f, ns=(8, 16, 32)):
    spec = ball_spec(Z)
    us = [radial_interpolant(build_ball_mesh(math.pi, n, spec=spec, symmetry="wedge"), f) for n in ns]
    return an.weighted_regularity_profile(us, spec, a_grid)


def test_profile_Z0_brackets_eta():
    mode = radial_mode(0.0, 0, 1, math.pi)
    rows, (lo, hi) = _profile(0.0, [0.25, 0.75], lambda r: model_eigenfunction(mode, r))
    assert [r.verdict for r in rows] == ["bounded", "growing"]
    assert lo == 0.25 and hi == 0.75


def test_profile_Z2_bounded_up_to_grid_cap():
    mode = radial_mode(2.0, 0, 1, math.pi)
    rows, (lo, hi) = _profile(2.0, [0.25, 0.75, 1.25], lambda r: model_eigenfunction(mode, r))
    assert all(r.verdict == "bounded" for r in rows) and hi is None


def test_profile_smooth_free_torus_bounded():
    spec = PotentialSpec(Domain.torus())
    us = [interpolate(lambda X: np.cos(2 * math.pi * X[:, 0]), build_torus_mesh(None, n)) for n in (4, 8, 16)]
    rows, (lo, hi) = an.weighted_regularity_profile(us, spec, [-1.0, 0.0, 1.0])
    assert all(r.verdict == "bounded" for r in rows) and hi is None


def test_essential_spectrum_bound():
    dom = Domain.ball(6.0)
    assert an.essential_spectrum_bound(PotentialSpec(dom, (), RadialWell(0.0, 25.0, 2.8, 0.1))) == 25.0
    aniso = RadialWell(0.0, 3.0, 2.8, 0.1, anisotropy=4.0)
    assert an.essential_spectrum_bound(PotentialSpec(dom, (), aniso)) == pytest.approx(3.0, abs=1e-12)
    assert an.essential_spectrum_bound(PotentialSpec(dom, (), CoulombTail(1.0))) == 0.0
    with pytest.raises(DomainError):
        an.essential_spectrum_bound(PotentialSpec(dom, (), TrigPolynomial(0.0, ((1, 0, 0, 1.0, 0.0),))))


def test_decay_fit_refuses_above_threshold():
    spec = PotentialSpec(Domain.ball(6.0), (), RadialWell(0.0, 25.0, 2.8, 0.1))
    m = build_ball_mesh(6.0, 8, symmetry="wedge")
    u = interpolate(lambda X: np.exp(-np.linalg.norm(X, axis=1)), m)
    with pytest.raises(an.FitError):
        an.decay_fit(u, 30.0, spec)
    eps, window = an.decay_fit(u, 1.0, spec)
    assert window == (3.0, 5.4) and eps == pytest.approx(1.0, rel=0.05)
