"""ASCII outputs: meshes, coordinate matrices, eigenvectors, CSV tables, manifests.

Mesh format
    invsq-mesh 1
    kind <torus|ball> symmetry <full|octant|wedge>
    vertices <N>        then N lines "x y z"
    tets <T>            then T lines "a b c d" (0-based, positively oriented)
    ident <N>           then N lines "representative"
    boundary <B>        then B lines "vertex"
    singular <S>        then S lines "vertex"

Matrix format: header "<rows> <cols> <nnz>", then "row col re im" lines
(0-based, row-major order). Eigenvector format: header "<n> <k>", a line of
k eigenvalues, then n lines of k values ("re" or "re im" pairs).
Floats are written with repr, so files are byte-reproducible.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os

import numpy as np
import scipy.sparse as sp


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write(path, text):
    with open(path, "w", newline="\n") as f:
        f.write(text)
    return sha256_text(text)


def _r(x) -> str:
    return repr(float(x))


def mesh_text(mesh) -> str:
    b = np.nonzero(mesh.boundary)[0]
    lines = ["invsq-mesh 1", f"kind {mesh.kind} symmetry {mesh.symmetry}", f"vertices {len(mesh.vertices)}"]
    lines += [f"{_r(x)} {_r(y)} {_r(z)}" for x, y, z in mesh.vertices]
    lines.append(f"tets {len(mesh.tets)}")
    lines += [" ".join(map(str, t)) for t in mesh.tets.tolist()]
    lines.append(f"ident {len(mesh.ident)}")
    lines += [str(i) for i in mesh.ident.tolist()]
    lines.append(f"boundary {len(b)}")
    lines += [str(i) for i in b.tolist()]
    lines.append(f"singular {len(mesh.singular_vertices)}")
    lines += [str(int(i)) for i in mesh.singular_vertices]
    return "\n".join(lines) + "\n"


def write_mesh(mesh, path) -> str:
    return _write(path, mesh_text(mesh))


def read_mesh_arrays(path) -> dict:
    with open(path) as f:
        lines = f.read().split("\n")
    if lines[0] != "invsq-mesh 1":
        raise ValueError("not an invsq mesh file")
    kind, _, symmetry = lines[1].split()[1:4]
    out = {"kind": kind, "symmetry": symmetry}
    i = 2
    for name, width, dtype in [("vertices", 3, float), ("tets", 4, int), ("ident", 1, int),
                               ("boundary", 1, int), ("singular", 1, int)]:
        tag, cnt = lines[i].split()
        assert tag == name
        cnt = int(cnt)
        block = lines[i + 1:i + 1 + cnt]
        arr = np.array([[dtype(t) for t in ln.split()] for ln in block], dtype=dtype).reshape(cnt, width)
        out[name] = arr if width > 1 else arr[:, 0]
        i += 1 + cnt
    return out


def matrix_text(A) -> str:
    A = sp.coo_matrix(sp.csr_matrix(A))
    order = np.lexsort((A.col, A.row))
    rows, cols, vals = A.row[order], A.col[order], A.data[order]
    buf = io.StringIO()
    buf.write(f"{A.shape[0]} {A.shape[1]} {len(vals)}\n")
    for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
        v = complex(v)
        buf.write(f"{i} {j} {_r(v.real)} {_r(v.imag)}\n")
    return buf.getvalue()


def write_matrix(A, path) -> str:
    return _write(path, matrix_text(A))


def read_matrix(path):
    with open(path) as f:
        n, m, nnz = (int(t) for t in f.readline().split())
        data = np.loadtxt(f, ndmin=2) if nnz else np.zeros((0, 4))
    vals = data[:, 2] + 1j * data[:, 3]
    if not np.any(data[:, 3]):
        vals = vals.real
    return sp.csr_matrix((vals, (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m))


def eigenvectors_text(eigenvalues, vectors) -> str:
    V = np.asarray(vectors)
    cplx = np.iscomplexobj(V)
    buf = io.StringIO()
    buf.write(f"{V.shape[0]} {V.shape[1]} {'complex' if cplx else 'real'}\n")
    buf.write(" ".join(_r(x) for x in eigenvalues) + "\n")
    for row in V:
        if cplx:
            buf.write(" ".join(f"{_r(z.real)} {_r(z.imag)}" for z in row) + "\n")
        else:
            buf.write(" ".join(_r(x) for x in row) + "\n")
    return buf.getvalue()


def write_eigenvectors(eigenvalues, vectors, path) -> str:
    return _write(path, eigenvectors_text(eigenvalues, vectors))


def read_eigenvectors(path):
    with open(path) as f:
        n, k, kind = f.readline().split()
        lam = np.array([float(t) for t in f.readline().split()])
        data = np.loadtxt(f, ndmin=2)
    if kind == "complex":
        data = data[:, 0::2] + 1j * data[:, 1::2]
    return lam, data.reshape(int(n), int(k))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_r(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> str:
    return _write(path, csv_text(header, rows))


def write_json(path, obj) -> str:
    return _write(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o))


def write_manifest(out_dir, config_text, outputs: dict, timings: dict, extra=None) -> str:
    """manifest.json: canonical config, sha256 of every output file, wall times."""
    files = {name: sha256_file(os.path.join(out_dir, name)) for name in sorted(outputs)}
    man = {"schema_version": 1, "config": config_text, "config_sha256": sha256_text(config_text),
           "outputs": files, "wall_seconds": timings}
    if extra:
        man.update(extra)
    return write_json(os.path.join(out_dir, "manifest.json"), man)
