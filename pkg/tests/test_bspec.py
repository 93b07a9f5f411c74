import math

import numpy as np
import pytest

from invsq import bspec
from invsq.model import Domain, PotentialSpec, SingularPoint


@pytest.mark.parametrize("Z,l,beta,alpha", [
    (0.0, 0, 0.0, -1.0),
    (2.0, 0, 1.0, -2.0),
    (0.0, 1, 1.0, -2.0),
    (0.75, 0, 0.5, -1.5),
    (-0.1875, 0, -0.25, -0.75),
])
def test_indicial_roots_frozen(Z, l, beta, alpha):
    b, a = bspec.indicial_roots(Z, l)
    assert abs(b - beta) < 1e-15 and abs(a - alpha) < 1e-15


def test_imaginary_pair_below_minus_quarter():
    b, a = bspec.indicial_roots(-2.25, 0)
    assert b == pytest.approx(complex(-0.5, math.sqrt(2)), abs=1e-15)
    assert a == pytest.approx(complex(-0.5, -math.sqrt(2)), abs=1e-15)
    assert b.imag > 0


def test_vieta_random():
    rng = np.random.default_rng(3)
    for _ in range(100):
        Z = rng.uniform(-0.2, 4)
        l = int(rng.integers(0, 8))
        b, a = bspec.indicial_roots(Z, l)
        assert abs(b + a + 1) < 1e-12
        assert abs(b * a + l * (l + 1) + Z) < 1e-12


def test_shifted_root_is_beta_plus_half():
    for Z in (-0.2, 0.0, 1.3):
        for l in range(4):
            assert abs(bspec.shifted_root(Z, l) - (bspec.indicial_roots(Z, l)[0] + 0.5)) < 1e-14


def test_double_root_detection_exact():
    s = bspec.boundary_spectrum(-0.25, 2)
    assert s.has_double_root and s.double_root_l == 0
    assert s.spec_b()[0] == (complex(-0.5, 0), 1)
    assert not bspec.boundary_spectrum(-0.25 + 1e-16, 2).has_double_root
    s = bspec.boundary_spectrum(-2.25, 2)
    assert s.double_root_l == 1
    assert s.roots_for(1)[0].multiplicity == 3


def test_eta_and_nu0():
    assert bspec.boundary_spectrum(0.0).eta == 0.5
    assert bspec.boundary_spectrum(2.0).eta == 1.5
    assert bspec.boundary_spectrum(-1.0).eta is None
    assert bspec.nu0(2.0) == 2.0
    assert bspec.nu0(0.0) == 1.5
    assert bspec.nu0(-1.0) == 1.0


def test_eta_of_spec():
    spec = PotentialSpec(Domain.torus(), (SingularPoint((0.2, 0.2, 0.2), 0.0, 0.2),
                                          SingularPoint((0.7, 0.7, 0.7), -0.1875, 0.2)))
    assert bspec.eta(spec) == pytest.approx(0.25)
    assert bspec.eta(PotentialSpec(Domain.torus())) == math.inf


def test_classify_thresholds():
    assert bspec.classify_extension(0.75 + 1e-9).regime == bspec.STRICT
    assert bspec.classify_extension(0.75).regime == bspec.BOUNDARY
    assert bspec.classify_extension(0.75 - 1e-9).regime == bspec.FRIEDRICHS
    assert bspec.classify_extension(-0.25).regime == bspec.DOUBLE_ROOT
    assert bspec.classify_extension(-1.0).regime == bspec.IMAGINARY
    c = bspec.classify_extension(0.0)
    assert c.extension_basis[0].exponent == 0.0
    assert bspec.classify_extension(2.0).essentially_self_adjoint


def test_index_set_examples():
    assert bspec.index_set(0.0, 1.0).values() == [-2, -1, 0, 1]
    assert bspec.index_set(2.0, 0.0, L_max=0).values() == [-2, -1, 0]
    with pytest.raises(bspec.NotCovered):
        bspec.index_set(-0.25, 0.0)


def test_fredholm_frozen_and_bruteforce():
    assert [bspec.fredholm_index(0.5, a) for a in (-2, -1, -0.3, 0.3, 1, 2)] == [4, 1, 0, 0, -1, -4]
    for Z in (0.0, 0.5, 2.0, 3.1):
        for a in (-2.7, -1.1, -0.3, 0.3, 1.1, 2.7):
            assert bspec.fredholm_index(Z, a) == bspec.fredholm_index_bruteforce(Z, a)
            assert bspec.fredholm_index(Z, a) == -bspec.fredholm_index(Z, -a)


def test_fredholm_errors():
    with pytest.raises(bspec.WeightOnIndicialLine):
        bspec.fredholm_index(0.0, 0.5)
    with pytest.raises(bspec.NotCovered):
        bspec.fredholm_index(-0.5, 1.0)


def test_report_json_ready():
    import json

    spec = PotentialSpec(Domain.ball(1.0), (SingularPoint((0, 0, 0), 2.0, math.inf),))
    r = bspec.report(2.0, spec=spec)
    json.dumps(r)
    assert r["eta"] == 1.5 and r["assumption2"]
    assert r["W_s"] == []
    spec0 = PotentialSpec(Domain.ball(1.0), (SingularPoint((0, 0, 0), 0.0, math.inf),))
    r = bspec.report(0.0, spec=spec0)
    json.dumps(r)
    assert r["W_s"] == ["chi_0 rho^0"]
