import numpy as np
import pytest

from invsq import _kernels_py, kernels
from invsq.mesh import build_ball_mesh
from invsq.quadrature import tet_rule

cy = pytest.importorskip("invsq._kernels")


@pytest.fixture(scope="module")
def data():
    m = build_ball_mesh(1.0, 10, mu=0.5)
    P = np.ascontiguousarray(m.coords())
    vol, G = _kernels_py.element_geometry(P)
    rule = tet_rule(3)
    rng = np.random.default_rng(0)
    W = rng.random((len(P), rule.size))
    Wb = rng.random((len(P), 5, 4))
    Wb /= Wb.sum(-1, keepdims=True)
    return dict(P=P, vol=vol, G=G, W=W, bary=np.ascontiguousarray(rule.bary), ebary=Wb,
                W5=rng.random((len(P), 5)))


def _close(a, b):
    return np.max(np.abs(a - b)) <= 1e-13 * max(np.max(np.abs(a)), 1e-300)


def test_backends_agree(data):
    P, vol, G = data["P"], data["vol"], data["G"]
    v1, g1 = cy.element_geometry(P, 1)
    assert _close(vol, v1) and _close(G, g1)
    for a, b in zip(_kernels_py.stiffness_mass(vol, G), cy.stiffness_mass(vol, G, 1)):
        assert _close(a, b)
    k = np.array([0.3, -1.2, 2.0])
    assert _close(_kernels_py.bloch_terms(vol, G, k), cy.bloch_terms(vol, G, k, 1))
    assert _close(_kernels_py.weighted_mass(data["W"], data["bary"]), cy.weighted_mass(data["W"], data["bary"], 1))
    eb = np.ascontiguousarray(data["ebary"])
    assert _close(_kernels_py.weighted_mass(data["W5"], eb), cy.weighted_mass(data["W5"], eb, 1))
    rng = np.random.default_rng(1)
    pos = rng.integers(0, 500, 20000)
    vals = rng.standard_normal(20000)
    assert _close(_kernels_py.scatter_add(pos, vals, 500), cy.scatter_add(pos, vals, 500))


def test_thread_count_invariance(data):
    vol, G = data["vol"], data["G"]
    S1, M1 = cy.stiffness_mass(vol, G, 1)
    S4, M4 = cy.stiffness_mass(vol, G, 4)
    assert np.array_equal(S1, S4) and np.array_equal(M1, M4)
    a = cy.weighted_mass(data["W"], data["bary"], 1)
    b = cy.weighted_mass(data["W"], data["bary"], 3)
    assert np.array_equal(a, b)


def test_element_matrices(data):
    vol, G = data["vol"], data["G"]
    S, M = _kernels_py.stiffness_mass(vol, G)
    S = S.reshape(-1, 4, 4)
    M = M.reshape(-1, 4, 4)
    # constants are in the kernel of S; mass integrates 1 to the volume
    assert np.max(np.abs(S.sum(2))) < 1e-12 * np.max(np.abs(S))
    assert np.allclose(M.sum((1, 2)), vol, rtol=1e-14)
    assert np.all(vol > 0)
    # gradients of the barycentric functions sum to zero
    assert np.max(np.abs(G.sum(1))) < 1e-10 * np.max(np.abs(G))
    B = _kernels_py.bloch_terms(vol, G, np.array([1.0, 0.0, 0.0])).reshape(-1, 4, 4)
    assert np.allclose(B, -np.transpose(B, (0, 2, 1)))


def test_backend_switch_roundtrip():
    prev = kernels.use_backend("python")
    try:
        assert kernels.BACKEND == "python"
        kernels.set_threads(2)
        assert kernels.get_threads() == 2
    finally:
        kernels.set_threads(1)
        kernels.use_backend(prev)
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_assembly_identical_across_backends():
    from invsq.assemble import assemble_dirichlet
    from invsq.model import Domain, PotentialSpec, SingularPoint

    spec = PotentialSpec(Domain.ball(1.0), (SingularPoint((0, 0, 0), 2.0, float("inf")),))
    m1 = build_ball_mesh(1.0, 8, spec=spec)
    m2 = build_ball_mesh(1.0, 8, spec=spec)
    prev = kernels.use_backend("python")
    try:
        A_py = assemble_dirichlet(m1, spec).A
    finally:
        kernels.use_backend(prev)
    kernels.use_backend("cython")
    try:
        A_cy = assemble_dirichlet(m2, spec).A
    finally:
        kernels.use_backend(prev)
    assert abs(A_py - A_cy).max() <= 1e-13 * abs(A_py).max()
