"""Command line driver: invsq {bspec, oracle, solve, analyze, verify}.

Exit codes: 0 success, 1 failed verification or solver error, 2 the
configured potential violates min Z > -1/4 (solve refused).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, bspec, export, kernels
from .config import ConfigError, RunConfig

EXIT_OK, EXIT_FAIL, EXIT_ASSUMPTION = 0, 1, 2


def _out_dir(args, cfg):
    d = args.out or cfg.out_dir
    os.makedirs(d, exist_ok=True)
    return d


def build_mesh(cfg: RunConfig, n=None):
    from .mesh import build_ball_mesh, build_torus_mesh, default_mu

    spec = cfg.spec
    n = n or cfg.n
    if cfg.domain.kind == "torus":
        return build_torus_mesh(spec, n, mu=cfg.mu)
    if cfg.mu is not None:
        mu = cfg.mu[0]
    else:
        mu = default_mu(spec.singular[0].Z) if spec.singular else 1.0
    return build_ball_mesh(cfg.domain.radius, n, mu=mu, grading_radius=cfg.grading_radius, spec=spec,
                           symmetry=cfg.symmetry)


def _operator(mesh, spec, k):
    from .assemble import assemble_dirichlet, assemble_hk

    return assemble_dirichlet(mesh, spec) if mesh.kind == "ball" else assemble_hk(mesh, spec, k)


def _bspec_json(cfg):
    spec = cfg.spec
    return {
        "schema_version": 1,
        "assumption2": spec.assumption2_satisfied,
        "eta": bspec.eta(spec) if spec.assumption2_satisfied else None,
        "points": [dict(position=list(p.position), **bspec.report(p.Z, spec=spec)) for p in spec.singular],
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_bspec(cfg, args):
    out = _out_dir(args, cfg)
    rep = _bspec_json(cfg)
    export.write_json(os.path.join(out, "bspec.json"), rep)
    print(json.dumps({"assumption2": rep["assumption2"], "eta": rep["eta"]}))
    return EXIT_OK


def cmd_oracle(cfg, args):
    from .radial_oracle import oracle_table

    out = _out_dir(args, cfg)
    R = cfg.domain.radius if cfg.domain.kind == "ball" else math.pi
    Zs = cfg.oracle_Z or tuple(p.Z for p in cfg.points) or (0.0,)
    rows = oracle_table(Zs, cfg.oracle_l, cfg.oracle_k, R)
    export.write_csv(os.path.join(out, "oracle.csv"), ["Z", "l", "k", "nu", "j_nu_k", "lambda"], rows)
    for r in rows:
        print(",".join(repr(float(x)) for x in r))
    return EXIT_OK


def _refuse(cfg, out, exc):
    export.write_json(os.path.join(out, "bspec.json"), _bspec_json(cfg))
    print(f"invsq: solve refused: {exc}", file=sys.stderr)
    return EXIT_ASSUMPTION


def run_solve(cfg, out, seed=0):
    """mesh + assemble + certified shift + eigenpairs; writes all run files."""
    from .assemble import BlochVector, coercive_shift
    from .eigensolve import EigenOptions, NotConverged, smallest_eigenpairs

    spec = cfg.spec
    spec.require_assumption2()
    t = {}
    t0 = time.perf_counter()
    mesh = build_mesh(cfg)
    t["mesh"] = time.perf_counter() - t0
    files = {"mesh.txt": export.write_mesh(mesh, os.path.join(out, "mesh.txt"))}
    rows, results = [], []
    for i, k in enumerate(cfg.k_path):
        kv = BlochVector.of(k)
        t0 = time.perf_counter()
        op = _operator(mesh, spec, kv)
        C = coercive_shift(spec, op) if cfg.shift is None else cfg.shift
        t[f"assemble_{i}"] = time.perf_counter() - t0
        if i == 0:
            files["A.txt"] = export.write_matrix(op.A, os.path.join(out, "A.txt"))
            files["M.txt"] = export.write_matrix(op.M, os.path.join(out, "M.txt"))
        t0 = time.perf_counter()
        try:
            res = smallest_eigenpairs(op, EigenOptions(n_eigs=cfg.n_eigs, tol=cfg.tol, shift=C, seed=seed))
        except NotConverged as exc:
            print(f"invsq: {exc}", file=sys.stderr)
            res = exc.result
        t[f"solve_{i}"] = time.perf_counter() - t0
        name = f"eigvec_k{i}.txt"
        files[name] = export.write_eigenvectors(res.eigenvalues, res.vectors, os.path.join(out, name))
        for j in range(cfg.n_eigs):
            rows.append((i, *map(float, kv.k), j, float(res.eigenvalues[j]), float(res.residuals[j])))
        results.append(res)
    export.write_csv(os.path.join(out, "eigenvalues.csv"),
                     ["k_index", "k1", "k2", "k3", "band_index", "lambda", "residual"], rows)
    files["eigenvalues.csv"] = None
    export.write_manifest(out, cfg.canonical(), files, t,
                          {"version": __version__, "backend": kernels.BACKEND, "threads": kernels.get_threads(),
                           "seed": seed, "dofs": int(results[0].vectors.shape[0]),
                           "all_converged": all(r.all_converged for r in results)})
    return mesh, results, rows


def cmd_solve(cfg, args):
    from .model import AssumptionViolation

    out = _out_dir(args, cfg)
    with open(os.path.join(out, "config.ini"), "w") as f:
        f.write(cfg.canonical())
    try:
        _, results, rows = run_solve(cfg, out, args.seed)
    except AssumptionViolation as exc:
        return _refuse(cfg, out, exc)
    for r in rows:
        print(f"k{r[0]} band {r[4]}: lambda = {r[5]!r}  residual = {r[6]:.2e}")
    return EXIT_OK if all(r.all_converged for r in results) else EXIT_FAIL


def _load_run(cfg, run_dir):
    """Rebuild the mesh, check it against the stored hash, and read eigvec_k0."""
    from .assemble import _dof_map
    from .mesh import DiscreteFunction

    with open(os.path.join(run_dir, "manifest.json")) as f:
        man = json.load(f)
    mesh = build_mesh(cfg)
    if export.sha256_text(export.mesh_text(mesh)) != man["outputs"]["mesh.txt"]:
        raise RuntimeError("mesh rebuilt from the config differs from the stored run")
    lam, X = export.read_eigenvectors(os.path.join(run_dir, "eigvec_k0.txt"))
    dof = _dof_map(mesh, mesh.kind == "ball")
    vals = np.zeros(mesh.n_vertices, dtype=X.dtype)
    on = dof >= 0
    us = []
    for j in range(X.shape[1]):
        v = vals.copy()
        v[on] = X[dof[on], j]
        us.append(DiscreteFunction(mesh, v))
    return mesh, lam, us


def cmd_analyze(cfg, args):
    from . import analyze
    from .model import DomainError

    out = _out_dir(args, cfg)
    run_dir = args.run or out
    spec = cfg.spec
    mesh, lam, us = _load_run(cfg, run_dir)
    summary = {"schema_version": 1, "run": os.path.abspath(run_dir), "eigenvalues": lam.tolist()}
    rows = []
    for ip, p in enumerate(spec.singular):
        try:
            fit = analyze.fit_singular_exponent(us[0], ip, window=cfg.fit_window)
        except analyze.FitError as exc:
            summary[f"exponent_{ip}"] = {"error": str(exc)}
            continue
        expected = math.sqrt(0.25 + p.Z) - 0.5
        rows.append(("exponent", ip, fit.slope, expected, fit.r2, fit.angular_variation))
        summary[f"exponent_{ip}"] = {"slope": fit.slope, "plain_slope": fit.plain_slope, "expected": expected,
                                     "r2": fit.r2, "angular_variation": fit.angular_variation,
                                     "window": list(fit.window), "n_radii": fit.n_radii}
    try:
        b_e = analyze.essential_spectrum_bound(spec)
        summary["essential_spectrum_bound"] = b_e
        if mesh.kind == "ball" and lam[0] < b_e:
            eps, win = analyze.decay_fit(us[0], float(lam[0]), spec)
            summary["decay"] = {"epsilon_hat": eps, "window": list(win), "sqrt_gap": math.sqrt(b_e - lam[0]),
                                "linear_gap": b_e - lam[0]}
            rows.append(("decay", 0, eps, math.sqrt(b_e - lam[0]), math.nan, math.nan))
    except DomainError:
        summary["essential_spectrum_bound"] = None
    if cfg.a_grid:
        family = []
        for n in (cfg.n // 4, cfg.n // 2):
            if n < 4 or n % 2:
                raise SystemExit("a_grid profile needs n divisible by 8")
            from .eigensolve import EigenOptions, smallest_eigenpairs

            m = build_mesh(cfg, n)
            r = smallest_eigenpairs(_operator(m, spec, None), EigenOptions(n_eigs=1, tol=cfg.tol, seed=args.seed))
            family.append(r.function(0))
        family.append(us[0])
        prof, bracket = analyze.weighted_regularity_profile(family, spec, cfg.a_grid)
        for r in prof:
            rows.append(("profile", r.a, r.norms[-1], r.increment_ratio, math.nan, r.verdict))
        summary["profile"] = {"bracket": list(bracket), "eta": bspec.eta(spec),
                              "rows": [r.__dict__ for r in prof]}
    export.write_csv(os.path.join(out, "analyze.csv"), ["quantity", "index", "value", "reference", "r2", "extra"],
                     rows)
    export.write_json(os.path.join(out, "analyze.json"), summary)
    print(json.dumps(summary, indent=1, default=float))
    return EXIT_OK


def verify_config(cfg, out, seed=0, rel_tol=0.05):
    """Solve the configured problem and compare with the closed-form oracle, if one applies."""
    from .radial_oracle import model_eigenvalue

    spec = cfg.spec
    checks = []
    if cfg.domain.kind == "ball" and spec.smooth.is_zero and (
            not spec.singular or (len(spec.singular) == 1 and spec.singular[0].is_global)):
        Z = spec.singular[0].Z if spec.singular else 0.0
        _, results, _ = run_solve(cfg, out, seed)
        ref = model_eigenvalue(Z, 0, 1, cfg.domain.radius)
        lam = float(results[0].eigenvalues[0])
        checks.append(("ground state vs radial oracle", lam, ref, abs(lam - ref) <= rel_tol * ref))
    elif cfg.domain.kind == "torus" and not spec.singular and spec.smooth.is_constant:
        c = spec.smooth(np.zeros((1, 3)))[0]
        _, results, _ = run_solve(cfg, out, seed)
        n_range = range(-2, 3)
        for res, k in zip(results, cfg.k_path):
            waves = sorted(float(sum((k[d] + 2 * math.pi * g[d]) ** 2 for d in range(3)) + c)
                           for g in [(a, b, e) for a in n_range for b in n_range for e in n_range])
            for j, lam in enumerate(res.eigenvalues):
                ref = waves[j]
                ok = abs(lam - ref) <= rel_tol * max(abs(ref), 1.0) + 1e-10
                checks.append((f"k={tuple(k)} band {j} vs plane wave", float(lam), ref, ok))
    else:
        _, results, _ = run_solve(cfg, out, seed)
        for res in results:
            checks.append(("residuals <= tol", float(res.residuals.max()), cfg.tol, res.all_converged))
    for name, val, ref, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {val!r} (reference {ref!r})")
    return all(c[3] for c in checks)


def cmd_verify(cfg, args):
    from .model import AssumptionViolation

    if cfg is None:
        from .acceptance import run_all

        crit = [int(c) for c in args.criteria.split(",")] if args.criteria else None
        results = run_all(crit)
        return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL
    out = _out_dir(args, cfg)
    try:
        ok = verify_config(cfg, out, args.seed)
    except AssumptionViolation as exc:
        return _refuse(cfg, out, exc)
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"bspec": cmd_bspec, "oracle": cmd_oracle, "solve": cmd_solve, "analyze": cmd_analyze,
            "verify": cmd_verify}


def parser():
    p = argparse.ArgumentParser(prog="invsq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=name != "verify", help="run configuration (INI)")
        s.add_argument("--out", help="output directory (default: [output] dir)")
        s.add_argument("--threads", type=int, default=1, help="threads for the compiled kernels")
        s.add_argument("--seed", type=int, default=0, help="seed of the eigensolver start block")
        if name == "analyze":
            s.add_argument("--run", help="directory of a finished solve (default: --out)")
        if name == "verify":
            s.add_argument("--criteria", help="comma separated acceptance criteria (no --config)")
    return p


def main(argv=None):
    args = parser().parse_args(argv)
    kernels.set_threads(args.threads)
    try:
        cfg = RunConfig.load(args.config) if args.config else None
    except (ConfigError, OSError) as exc:
        print(f"invsq: bad config: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
