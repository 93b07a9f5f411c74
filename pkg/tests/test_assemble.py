import math

import numpy as np
import pytest
import scipy.linalg as sla

from invsq import assemble as asm
from invsq.mesh import build_ball_mesh, build_torus_mesh, interpolate
from invsq.model import Domain, PotentialSpec, SingularPoint, TrigPolynomial, constant_field
from invsq.radial_oracle import model_eigenvalue


def gen_eigs(op, k):
    A, M = op.A.toarray(), op.M.toarray()
    return sla.eigh(A, M, eigvals_only=True, subset_by_index=[0, k - 1])


def test_bloch_vector_reduction():
    b = asm.BlochVector.of((math.pi + 0.25, -3.5 * math.pi, 0.0))
    assert np.all(np.array(b.reduced) >= -math.pi) and np.all(np.array(b.reduced) < math.pi)
    assert np.allclose(np.array(b.k), np.array(b.reduced) + 2 * math.pi * np.array(b.lattice_shift))
    assert asm.BlochVector.of((math.pi, 0, 0)).reduced[0] == -math.pi
    assert asm.BlochVector.of((0, 0, 0)).is_zero


def test_free_torus_constants_in_kernel():
    m = build_torus_mesh(None, 6)
    op = asm.assemble_hk(m, None, (0, 0, 0))
    assert not op.is_complex
    one = np.ones(op.n)
    assert np.max(np.abs(op.A @ one)) < 1e-12
    assert one @ (op.M @ one) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("k", [(0.0, 0.0, 0.0), (1.0, -0.5, 2.0)])
def test_constant_function_form(k):
    spec = PotentialSpec(Domain.torus(), (SingularPoint((0.5, 0.5, 0.5), 0.5, 0.25),),
                         TrigPolynomial(0.3, ((1, 0, 0, 0.2, 0.0),)))
    m = build_torus_mesh(spec, 8)
    op = asm.assemble_hk(m, spec, k)
    one = np.ones(op.n)
    val = np.vdot(one, op.A @ one)
    intV = np.sum(op.parts["V"] @ one)
    assert abs(val.imag) < 1e-12
    assert val.real == pytest.approx(np.dot(k, k) + intV, rel=1e-12)
    # int V over the torus: smooth mean 0.3 plus the point term, positive and finite
    assert intV > 0.3


def test_hermitian_and_mass_positive():
    spec = PotentialSpec(Domain.torus(), (SingularPoint((0.5, 0.5, 0.5), -0.1875, 0.25),))
    m = build_torus_mesh(spec, 8)
    op = asm.assemble_hk(m, spec, (0.7, 0.2, -1.1))
    assert op.is_complex
    assert op.hermitian_defect() <= 1e-12 * abs(op.A).max()
    assert np.linalg.eigvalsh(op.M.toarray()).min() > 0
    assert op.A.shape == (m.n_reps, m.n_reps)


def test_constant_potential_shifts_spectrum():
    m = build_torus_mesh(None, 6)
    base = gen_eigs(asm.assemble_hk(m, None, (0.4, 0, 0)), 5)
    spec = PotentialSpec(Domain.torus(), (), constant_field(2.5))
    shifted = gen_eigs(asm.assemble_hk(m, spec, (0.4, 0, 0)), 5)
    assert np.allclose(shifted - base, 2.5, atol=1e-10)


def test_green_identity():
    # u^H S v equals the sum of tet integrals of grad u . conj(grad v)
    m = build_torus_mesh(None, 6)
    op = asm.assemble_hk(m, None, (0, 0, 0))
    rng = np.random.default_rng(0)
    u = rng.standard_normal(op.n)
    v = rng.standard_normal(op.n)
    gu = np.einsum("eik,ei->ek", m.gradients, op.to_function(u).tet_values())
    gv = np.einsum("eik,ei->ek", m.gradients, op.to_function(v).tet_values())
    direct = np.sum(m.volumes * np.einsum("ek,ek->e", gu, gv))
    assert u @ (op.A @ v) == pytest.approx(direct, rel=1e-12)


def test_bloch_pi_gives_pi_squared():
    # the constant is an exact discrete eigenvector: S 1 = 0 and B 1 = 0
    for n in (6, 12):
        lam = gen_eigs(asm.assemble_hk(build_torus_mesh(None, n), None, (math.pi, 0, 0)), 1)[0]
        assert lam == pytest.approx(math.pi**2, rel=1e-12)


def test_reciprocal_shift_agrees_within_discretisation_error():
    # k and k + 2 pi e_1 give unitarily equivalent problems in the continuum;
    # the discrete gap shrinks like h^2 (stored ratios from n = 6, 12)
    k = np.array([0.5, 0.0, 0.0])
    gaps = []
    for n in (6, 12):
        m = build_torus_mesh(None, n)
        a = gen_eigs(asm.assemble_hk(m, None, k), 1)[0]
        b = gen_eigs(asm.assemble_hk(m, None, k + (2 * math.pi, 0, 0)), 1)[0]
        assert a == pytest.approx(0.25, rel=1e-12)
        gaps.append(abs(b - a))
    assert gaps[0] / gaps[1] > 3.0


def test_dirichlet_ball_free_and_shift():
    m = build_ball_mesh(math.pi, 10)
    op = asm.assemble_dirichlet(m, None)
    lam0 = gen_eigs(op, 3)
    lam1 = gen_eigs(asm.assemble_dirichlet(m, None, shift=1.75), 3)
    assert np.allclose(lam1 - lam0, 1.75, atol=1e-10)
    assert np.allclose(gen_eigs(op.shifted(0.5), 3) - lam0, 0.5, atol=1e-10)
    assert abs(lam0[0] - 1.0) < 0.15
    assert op.A.shape[0] == int((~m.boundary).sum())


def test_dirichlet_ball_inverse_square_moves_to_oracle():
    ref = model_eigenvalue(2.0, 0, 1, math.pi)
    assert ref == pytest.approx(2.0457, abs=1e-4)
    errs = []
    for n in (8, 16):
        spec = PotentialSpec(Domain.ball(math.pi), (SingularPoint((0, 0, 0), 2.0, math.inf),))
        op = asm.assemble_dirichlet(build_ball_mesh(math.pi, n, spec=spec, symmetry="wedge"), spec)
        errs.append(abs(gen_eigs(op, 1)[0] - ref))
    assert errs[1] < errs[0] / 2.5


def test_coercive_shift_cases():
    m = build_torus_mesh(None, 6)
    spec0 = PotentialSpec(Domain.torus())
    assert asm.coercive_shift(spec0, asm.assemble_hk(m, spec0, (0, 0, 0))) == 1.0
    spec = PotentialSpec(Domain.torus(), (), TrigPolynomial(0.0, ((1, 0, 0, 5.0, 0.0),)))
    op = asm.assemble_hk(m, spec, (0, 0, 0))
    C = asm.coercive_shift(spec, op)
    assert C <= 12.0
    assert gen_eigs(op, 1)[0] + C > 0
    for n in (8, 12):
        s = PotentialSpec(Domain.torus(), (SingularPoint((0.5, 0.5, 0.5), -0.1875, 0.25),))
        mm = build_torus_mesh(s, n)
        assert asm.coercive_shift(s, asm.assemble_hk(mm, s, (0, 0, 0))) >= 1.0


def test_hardy_quotient_bounded():
    spec = PotentialSpec(Domain.ball(1.0), (SingularPoint((0, 0, 0), 1.0, math.inf),))
    q, s = asm.hardy_quotient(asm.assemble_dirichlet(build_ball_mesh(1.0, 8, spec=spec), spec), samples=50)
    assert 0 < s <= q <= 4.0


def test_assembly_is_deterministic():
    spec = PotentialSpec(Domain.torus(), (SingularPoint((0.5, 0.5, 0.5), 0.5, 0.25),))
    a = asm.assemble_hk(build_torus_mesh(spec, 8), spec, (0.3, 0, 0)).A
    b = asm.assemble_hk(build_torus_mesh(spec, 8), spec, (0.3, 0, 0)).A
    assert np.array_equal(a.indptr, b.indptr) and np.array_equal(a.indices, b.indices)
    assert np.array_equal(a.data, b.data)


def test_interpolated_plane_wave_rayleigh_quotient():
    # the discrete form on the interpolant of e^{2 pi i x} with k = 0 is close to 4 pi^2
    m = build_torus_mesh(None, 16)
    op = asm.assemble_hk(m, None, (0, 0, 0))
    u = op.from_function(interpolate(lambda X: np.cos(2 * math.pi * X[:, 0]), m))
    rq = (u @ (op.A @ u)) / (u @ (op.M @ u))
    assert rq == pytest.approx(4 * math.pi**2, rel=0.05)
