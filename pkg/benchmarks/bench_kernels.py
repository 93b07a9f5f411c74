"""Compiled vs numpy assembly kernels.

    python benchmarks/bench_kernels.py [--n 32] [--repeat 3] [--threads 1]

Times each kernel on the tets of a ball mesh, checks the two backends agree,
and prints one row per kernel.
"""
import argparse
import time

import numpy as np

from invsq import _kernels_py, kernels
from invsq.mesh import build_ball_mesh
from invsq.quadrature import tet_rule


def best_of(fn, repeat):
    t = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        t.append(time.perf_counter() - t0)
    return min(t), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    try:
        from invsq import _kernels as cy
    except ImportError:
        raise SystemExit("compiled kernels not built: pip install -e . --no-build-isolation")

    m = build_ball_mesh(1.0, args.n)
    P = np.ascontiguousarray(m.coords())
    T = len(P)
    vol, G = _kernels_py.element_geometry(P)
    rule = tet_rule(3)
    W = np.random.default_rng(0).random((T, len(rule.weights)))
    bary = np.ascontiguousarray(rule.bary)
    k = np.array([0.3, -1.2, 2.0])
    pos = np.random.default_rng(1).integers(0, 16 * T // 3, 16 * T)
    vals = np.random.default_rng(2).standard_normal(16 * T)
    nth = args.threads
    cases = [
        ("element_geometry", lambda b: b.element_geometry(P, nth), lambda o: o[1]),
        ("stiffness_mass", lambda b: b.stiffness_mass(vol, G, nth), lambda o: o[0]),
        ("bloch_terms", lambda b: b.bloch_terms(vol, G, k, nth), lambda o: o),
        ("weighted_mass", lambda b: b.weighted_mass(W, bary, nth), lambda o: o),
        ("scatter_add", lambda b: b.scatter_add(pos, vals, 16 * T // 3), lambda o: o),
    ]
    print(f"tets {T}, threads {nth}, default backend {kernels.BACKEND}")
    print(f"{'kernel':18s} {'numpy s':>10s} {'cython s':>10s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, call, pick in cases:
        tp, op = best_of(lambda: call(_kernels_py), args.repeat)
        tc, oc = best_of(lambda: call(cy), args.repeat)
        a, b = pick(op), pick(oc)
        diff = float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))
        print(f"{name:18s} {tp:10.4f} {tc:10.4f} {tp / tc:8.2f} {diff:13.1e}")


if __name__ == "__main__":
    main()
