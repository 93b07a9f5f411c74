import math
import os

import numpy as np
import pytest
import scipy.sparse as sp

from invsq import export
from invsq.config import ConfigError, RunConfig
from invsq.mesh import build_ball_mesh, build_torus_mesh
from invsq.model import RadialWell, TrigPolynomial

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")

TRIG = """
[domain]
kind = torus
[point.0]
position_len = 0.5, 0.5, 0.5
Z = 0.5
cutoff_len = 0.25
[point.1]
position_len = 0, 0, 0
Z = 2
cutoff_len = 0.2
[smooth]
kind = trig
c0_en = 1.5
terms = 1 0 0 0.25 -0.5; 0 2 1 0.1 0
[mesh]
n = 10
mu = 0.5, 1
[solve]
n_eigs = 2
tol = 1e-9
k_invlen = 0.1 0.2 0.3
[output]
dir = somewhere
"""


@pytest.mark.parametrize("name", sorted(f for f in os.listdir(CONFIGS) if f.endswith(".ini")))
def test_shipped_configs_round_trip(name):
    cfg = RunConfig.load(os.path.join(CONFIGS, name))
    text = cfg.canonical()
    again = RunConfig.parse(text)
    assert again.canonical() == text


def test_parse_fields():
    cfg = RunConfig.parse(TRIG)
    assert len(cfg.points) == 2 and cfg.points[1].Z == 2.0
    assert isinstance(cfg.smooth, TrigPolynomial) and cfg.smooth.c0 == 1.5
    assert cfg.smooth.terms[0] == (1, 0, 0, 0.25, -0.5)
    assert cfg.mu == (0.5, 1.0) and cfg.k_path == [(0.1, 0.2, 0.3)]
    assert cfg.n == 10 and cfg.tol == 1e-9 and cfg.n_eigs == 2
    assert RunConfig.parse(cfg.canonical()).canonical() == cfg.canonical()


def test_well_and_inf_cutoff():
    cfg = RunConfig.load(os.path.join(CONFIGS, "well_decay.ini"))
    assert isinstance(cfg.smooth, RadialWell) and cfg.smooth.v_out == 25.0
    cfg = RunConfig.load(os.path.join(CONFIGS, "ball_Z2.ini"))
    assert math.isinf(cfg.points[0].cutoff_radius)
    assert "cutoff_len = inf" in cfg.canonical()


@pytest.mark.parametrize("drop", ["Z = 0.5\n", "cutoff_len = 0.25\n", "tol = 1e-9\n", "n = 10\n"])
def test_no_implicit_defaults(drop):
    with pytest.raises(ConfigError):
        RunConfig.parse(TRIG.replace(drop, "", 1))


@pytest.mark.parametrize("old,new", [("kind = trig", "kind = cubic"), ("n = 10", "n = 7"),
                                     ("[output]", "[outptu]"), ("c0_en = 1.5", "c0 = 1.5"),
                                     ("k_invlen = 0.1 0.2 0.3", "k_invlen = 0.1 0.2")])
def test_invalid_configs(old, new):
    with pytest.raises(ConfigError):
        RunConfig.parse(TRIG.replace(old, new))


def test_mesh_text_round_trip(tmp_path):
    m = build_ball_mesh(1.0, 6, mu=0.5, symmetry="octant")
    h = export.write_mesh(m, tmp_path / "mesh.txt")
    assert h == export.sha256_file(tmp_path / "mesh.txt")
    back = export.read_mesh_arrays(tmp_path / "mesh.txt")
    assert np.array_equal(back["vertices"], m.vertices) and np.array_equal(back["tets"], m.tets)
    assert back["symmetry"] == "octant" and list(back["singular"]) == list(m.singular_vertices)
    assert np.array_equal(np.nonzero(m.boundary)[0], back["boundary"])
    assert export.mesh_text(build_ball_mesh(1.0, 6, mu=0.5, symmetry="octant")) == export.mesh_text(m)


def test_matrix_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    A = sp.random(30, 30, density=0.1, random_state=1, format="csr")
    A = A + 1j * sp.random(30, 30, density=0.05, random_state=2, format="csr")
    export.write_matrix(A, tmp_path / "A.txt")
    B = export.read_matrix(tmp_path / "A.txt")
    assert abs(A - B).max() == 0
    R = sp.csr_matrix(rng.standard_normal((5, 5)))
    export.write_matrix(R, tmp_path / "R.txt")
    back = export.read_matrix(tmp_path / "R.txt")
    assert not np.iscomplexobj(back.data) and abs(R - back).max() == 0
    first = open(tmp_path / "R.txt").readline().split()
    assert first == ["5", "5", "25"]


@pytest.mark.parametrize("dtype", [float, complex])
def test_eigenvector_round_trip(tmp_path, dtype):
    rng = np.random.default_rng(3)
    V = rng.standard_normal((12, 3)).astype(dtype)
    if dtype is complex:
        V += 1j * rng.standard_normal((12, 3))
    lam = np.array([0.1, 1 / 3, 2.5])
    export.write_eigenvectors(lam, V, tmp_path / "v.txt")
    l2, V2 = export.read_eigenvectors(tmp_path / "v.txt")
    assert np.array_equal(lam, l2) and np.array_equal(V, V2)


def test_csv_and_json(tmp_path):
    export.write_csv(tmp_path / "t.csv", ["a", "b"], [(1, 0.1), (2, np.float64(1 / 3))])
    assert open(tmp_path / "t.csv").read() == "a,b\n1,0.1\n2,0.3333333333333333\n"
    export.write_json(tmp_path / "t.json", {"x": np.arange(3), "y": np.float64(2.0), "z": 1 + 2j})
    import json

    assert json.load(open(tmp_path / "t.json")) == {"x": [0, 1, 2], "y": 2.0, "z": [1.0, 2.0]}


def test_torus_mesh_text_has_identification():
    m = build_torus_mesh(None, 4)
    text = export.mesh_text(m)
    assert "ident 125" in text and "boundary 0" in text and "tets 384" in text
