"""Run configuration: sectioned key = value text with units in the key names.

Sections
    [domain]   kind = torus | ball, radius_len (ball only)
    [point.N]  position_len = x, y, z; Z; cutoff_len (inf: whole ball)
    [smooth]   kind = zero | trig | well | coulomb and its coefficients
    [mesh]     n, optional mu, symmetry, grading_radius_len
    [solve]    n_eigs, tol, optional shift_en, k_invlen or k_path_invlen
    [analyze]  optional a_grid, fit_window_len
    [oracle]   optional Z_list, l_list, k_list
    [output]   dir

Z, cutoff_len and tol have no defaults. `canonical` re-serialises a parsed
config; parse(canonical(c)) gives back a byte-identical canonical text.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from typing import Optional

from .model import (
    CoulombTail,
    Domain,
    PotentialSpec,
    RadialWell,
    SingularPoint,
    TrigPolynomial,
    ZeroField,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    """Shortest round-trip text for a float (inf and -inf spelled out)."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == int(x) and abs(x) < 1e15:
        return f"{int(x)}.0"
    return repr(x)


def _floats(text, n=None, key=""):
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if n is not None and len(vals) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def _vec(v):
    return ", ".join(fmt(x) for x in v)


SMOOTH_KEYS = {
    "zero": {},
    "trig": {"c0_en": "c0", "terms": "terms"},
    "well": {"v_in_en": "v_in", "v_out_en": "v_out", "radius_len": "radius", "width_len": "width",
             "anisotropy_en": "anisotropy"},
    "coulomb": {"q_en_len": "q", "soft_len": "soft"},
}


@dataclass
class RunConfig:
    domain: Domain
    points: list
    smooth: object
    n: int
    tol: float
    n_eigs: int = 1
    mu: Optional[tuple] = None
    symmetry: str = "full"
    grading_radius: Optional[float] = None
    shift: Optional[float] = None
    k_path: list = field(default_factory=lambda: [(0.0, 0.0, 0.0)])
    a_grid: tuple = ()
    fit_window: Optional[tuple] = None
    oracle_Z: tuple = ()
    oracle_l: tuple = (0,)
    oracle_k: tuple = (1, 2, 3)
    out_dir: str = "runs"

    @property
    def spec(self) -> PotentialSpec:
        return PotentialSpec(self.domain, self.points, self.smooth)

    # -- text ---------------------------------------------------------------
    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        known = {"domain", "smooth", "mesh", "solve", "analyze", "oracle", "output"}
        for s in cp.sections():
            if s not in known and not s.startswith("point."):
                raise ConfigError(f"unknown section [{s}]")

        def need(sec, key):
            if not cp.has_option(sec, key):
                raise ConfigError(f"[{sec}] {key} is required")
            return cp.get(sec, key)

        def opt(sec, key, default=None):
            return cp.get(sec, key) if cp.has_section(sec) and cp.has_option(sec, key) else default

        kind = need("domain", "kind")
        if kind == "torus":
            domain = Domain.torus()
        elif kind == "ball":
            domain = Domain.ball(float(need("domain", "radius_len")))
        else:
            raise ConfigError(f"[domain] kind = {kind!r}")

        points = []
        for s in sorted((s for s in cp.sections() if s.startswith("point.")), key=lambda s: int(s[6:])):
            pos = _floats(need(s, "position_len"), 3, f"[{s}] position_len")
            points.append(SingularPoint(tuple(pos), float(need(s, "Z")), float(need(s, "cutoff_len"))))

        skind = opt("smooth", "kind", "zero")
        if skind not in SMOOTH_KEYS:
            raise ConfigError(f"[smooth] kind = {skind!r}")
        kw = {}
        for key, name in SMOOTH_KEYS[skind].items():
            val = opt("smooth", key)
            if val is None:
                continue
            if name == "terms":
                kw[name] = tuple(tuple(_floats(t, 5, "[smooth] terms")) for t in val.split(";") if t.strip())
            else:
                kw[name] = float(val)
        if cp.has_section("smooth"):
            extra = set(cp.options("smooth")) - set(SMOOTH_KEYS[skind]) - {"kind"}
            if extra:
                raise ConfigError(f"[smooth] unknown keys for kind {skind}: {sorted(extra)}")
        smooth = {"zero": ZeroField, "trig": TrigPolynomial, "well": RadialWell,
                  "coulomb": CoulombTail}[skind](**kw)

        mu = opt("mesh", "mu")
        gr = opt("mesh", "grading_radius_len")
        shift = opt("solve", "shift_en")
        if cp.has_option("solve", "k_path_invlen"):
            k_path = [tuple(_floats(t, 3, "[solve] k_path_invlen")) for t in
                      cp.get("solve", "k_path_invlen").split(";") if t.strip()]
        else:
            k_path = [tuple(_floats(opt("solve", "k_invlen", "0 0 0"), 3, "[solve] k_invlen"))]
        fw = opt("analyze", "fit_window_len")
        cfg = cls(
            domain=domain,
            points=points,
            smooth=smooth,
            n=int(need("mesh", "n")),
            tol=float(need("solve", "tol")),
            n_eigs=int(opt("solve", "n_eigs", "1")),
            mu=tuple(_floats(mu)) if mu is not None else None,
            symmetry=opt("mesh", "symmetry", "full"),
            grading_radius=float(gr) if gr is not None else None,
            shift=float(shift) if shift is not None else None,
            k_path=k_path,
            a_grid=tuple(_floats(opt("analyze", "a_grid", ""))),
            fit_window=tuple(_floats(fw, 2, "[analyze] fit_window_len")) if fw is not None else None,
            oracle_Z=tuple(_floats(opt("oracle", "Z_list", ""))),
            oracle_l=tuple(int(x) for x in _floats(opt("oracle", "l_list", "0"))),
            oracle_k=tuple(int(x) for x in _floats(opt("oracle", "k_list", "1 2 3"))),
            out_dir=opt("output", "dir", "runs"),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.parse(f.read())

    def validate(self):
        if self.n < 4 or self.n % 2:
            raise ConfigError("[mesh] n must be even and >= 4")
        if not self.tol > 0:
            raise ConfigError("[solve] tol must be positive")
        if self.n_eigs < 1:
            raise ConfigError("[solve] n_eigs >= 1")
        if self.symmetry not in ("full", "octant", "wedge"):
            raise ConfigError(f"[mesh] symmetry = {self.symmetry!r}")
        if self.domain.kind == "torus" and self.symmetry != "full":
            raise ConfigError("[mesh] symmetry reduction is for the ball only")
        self.spec  # runs the potential validation

    def canonical(self) -> str:
        out = [f"# invsq run config, schema {SCHEMA_VERSION}", "", "[domain]", f"kind = {self.domain.kind}"]
        if self.domain.kind == "ball":
            out.append(f"radius_len = {fmt(self.domain.radius)}")
        for i, p in enumerate(self.points):
            out += ["", f"[point.{i}]", f"position_len = {_vec(p.position)}", f"Z = {fmt(p.Z)}",
                    f"cutoff_len = {fmt(p.cutoff_radius)}"]
        out += ["", "[smooth]", f"kind = {self.smooth.kind}"]
        params = self.smooth.params()
        for key, name in sorted(SMOOTH_KEYS[self.smooth.kind].items()):
            if name == "terms":
                if params["terms"]:
                    out.append("terms = " + "; ".join(
                        " ".join([str(t[0]), str(t[1]), str(t[2]), fmt(t[3]), fmt(t[4])]) for t in params["terms"]))
            else:
                out.append(f"{key} = {fmt(params[name])}")
        out += ["", "[mesh]", f"n = {self.n}", f"symmetry = {self.symmetry}"]
        if self.mu is not None:
            out.append(f"mu = {_vec(self.mu)}")
        if self.grading_radius is not None:
            out.append(f"grading_radius_len = {fmt(self.grading_radius)}")
        out += ["", "[solve]", f"n_eigs = {self.n_eigs}", f"tol = {fmt(self.tol)}"]
        if self.shift is not None:
            out.append(f"shift_en = {fmt(self.shift)}")
        out.append("k_path_invlen = " + "; ".join(_vec(k) for k in self.k_path))
        if self.a_grid or self.fit_window is not None:
            out += ["", "[analyze]"]
            if self.a_grid:
                out.append(f"a_grid = {_vec(self.a_grid)}")
            if self.fit_window is not None:
                out.append(f"fit_window_len = {_vec(self.fit_window)}")
        if self.oracle_Z:
            out += ["", "[oracle]", f"Z_list = {_vec(self.oracle_Z)}",
                    "l_list = " + ", ".join(str(x) for x in self.oracle_l),
                    "k_list = " + ", ".join(str(x) for x in self.oracle_k)]
        out += ["", "[output]", f"dir = {self.out_dir}", ""]
        return "\n".join(out)
