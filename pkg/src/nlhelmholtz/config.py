"""Flat ``key = value`` run configuration.

Grammar: one assignment per line, ``#`` starts a comment, keys are dotted
names from :data:`KEYS`.  Values are numbers (complex allowed as ``2+0.1j``),
words, or for ``mesh.vertices`` a ``;``-separated list of ``x,y`` pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .assembly import PlaneWave
from .context import WaveContext
from .errors import ConfigurationError, MeshError
from .mesh import DiskObstacle, PolygonObstacle, import_mesh, mesh_disk
from .solver import Kerr, Linear, SaturatedKerr, SolverConfig

KEYS = {
    "kappa": "float",
    "R": "float",
    "N": "int",
    "mesh.h": "float",
    "mesh.obstacle": "word",
    "mesh.a": "float",
    "mesh.vertices": "points",
    "mesh.file": "word",
    "nonlinearity.kind": "word",
    "nonlinearity.eps": "complex",
    "nonlinearity.alpha": "complex",
    "nonlinearity.gamma": "float",
    "incident.kind": "word",
    "incident.amplitude": "complex",
    "incident.angle": "float",
    "solver.tol": "float",
    "solver.max_iter": "int",
    "solver.damping": "float",
    "solver.seed": "int",
    "output.dir": "word",
}

DEFAULTS = {
    "mesh.obstacle": "disk",
    "nonlinearity.kind": "linear",
    "nonlinearity.eps": 1.0,
    "nonlinearity.alpha": 0.0,
    "nonlinearity.gamma": 1.0,
    "incident.kind": "plane",
    "incident.amplitude": 1.0,
    "incident.angle": 0.0,
    "solver.tol": 1e-10,
    "solver.max_iter": 50,
    "solver.damping": 1.0,
    "solver.seed": 0,
    "output.dir": "out",
}


def _convert(key, kind, raw):
    try:
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if kind == "complex":
            return complex(raw.replace(" ", ""))
        if kind == "points":
            pts = [tuple(float(c) for c in p.split(",")) for p in raw.split(";") if p.strip()]
            if any(len(p) != 2 for p in pts):
                raise ValueError
            return tuple(pts)
        return raw
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {kind}", key=key) from None


def parse_config(text: str) -> dict:
    """Parse configuration text into a dict of typed values (defaults applied)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'", key=f"line {lineno}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise ConfigurationError(f"{key}: unknown key (line {lineno})", key=key)
        if key in values:
            raise ConfigurationError(f"{key}: duplicate assignment (line {lineno})", key=key)
        values[key] = _convert(key, KEYS[key], raw)
    for k, v in DEFAULTS.items():
        values.setdefault(k, v)
    return values


@dataclass(frozen=True)
class RunConfig:
    ctx: WaveContext
    values: dict
    text: str

    def build_mesh(self):
        v = self.values
        try:
            if "mesh.file" in v:
                m = import_mesh(v["mesh.file"])
                if abs(m.R - self.ctx.R) > 1e-12 * self.ctx.R:
                    raise ConfigurationError(f"mesh.file: mesh radius {m.R} differs from R={self.ctx.R}", key="mesh.file")
                return m
            return mesh_disk(self.ctx.R, self.obstacle(), v["mesh.h"])
        except MeshError as exc:
            key = "mesh.h" if exc.invariant in ("resolution", "quality") else "mesh.a"
            if "mesh.file" in v:
                key = "mesh.file"
            elif exc.invariant == "clearance" and v["mesh.obstacle"] == "polygon":
                key = "mesh.vertices"
            raise ConfigurationError(f"{key}: {exc}", key=key) from exc

    def obstacle(self):
        v = self.values
        if v["mesh.obstacle"] == "disk":
            return DiskObstacle(v["mesh.a"])
        return PolygonObstacle(v["mesh.vertices"])

    def nonlinearity(self):
        v = self.values
        kind = v["nonlinearity.kind"]
        eps, alpha = v["nonlinearity.eps"], v["nonlinearity.alpha"]
        eps = eps.real if eps.imag == 0 else eps
        alpha = alpha.real if alpha.imag == 0 else alpha
        if kind == "linear":
            return Linear(eps=eps)
        if kind == "kerr":
            return Kerr(eps=eps, alpha=alpha)
        return SaturatedKerr(eps=eps, alpha=alpha, gamma=v["nonlinearity.gamma"])

    def incident(self):
        v = self.values
        if v["incident.kind"] == "none":
            return None
        amp = v["incident.amplitude"]
        return PlaneWave(amp.real if amp.imag == 0 else amp, v["incident.angle"])

    def solver(self):
        v = self.values
        return SolverConfig(v["solver.tol"], v["solver.max_iter"], v["solver.damping"], v["solver.seed"])


def _require(values, key):
    if key not in values:
        raise ConfigurationError(f"{key}: required key is missing", key=key)
    return values[key]


def load_config(text: str) -> RunConfig:
    """Parse and validate; every error names the offending key."""
    v = parse_config(text)
    kappa = _require(v, "kappa")
    R = _require(v, "R")
    N = _require(v, "N")
    if not kappa > 0:
        raise ConfigurationError(f"kappa: must be positive, got {kappa}", key="kappa")
    if not R > 0:
        raise ConfigurationError(f"R: must be positive, got {R}", key="R")
    if N < 0:
        raise ConfigurationError(f"N: must be nonnegative, got {N}", key="N")
    ctx = WaveContext(kappa, R, N)
    if "mesh.file" not in v:
        h = _require(v, "mesh.h")
        if not h > 0:
            raise ConfigurationError(f"mesh.h: must be positive, got {h}", key="mesh.h")
        obst = v["mesh.obstacle"]
        if obst == "disk":
            a = _require(v, "mesh.a")
            if not 0 < a < R:
                raise ConfigurationError(f"mesh.a: obstacle radius must satisfy 0 < a < R={R}, got {a}", key="mesh.a")
        elif obst == "polygon":
            verts = _require(v, "mesh.vertices")
            try:
                poly = PolygonObstacle(verts)
            except MeshError as exc:
                raise ConfigurationError(f"mesh.vertices: {exc}", key="mesh.vertices") from exc
            if poly.radius >= R:
                raise ConfigurationError(
                    f"mesh.vertices: R={R} must exceed the obstacle extent {poly.radius}", key="mesh.vertices"
                )
        else:
            raise ConfigurationError(f"mesh.obstacle: expected disk or polygon, got {obst!r}", key="mesh.obstacle")
    kind = v["nonlinearity.kind"]
    if kind not in ("linear", "kerr", "satkerr"):
        raise ConfigurationError(f"nonlinearity.kind: expected linear, kerr or satkerr, got {kind!r}", key="nonlinearity.kind")
    if v["nonlinearity.eps"].imag < 0:
        raise ConfigurationError("nonlinearity.eps: imaginary part must be nonnegative", key="nonlinearity.eps")
    if kind == "satkerr" and not v["nonlinearity.gamma"] > 0:
        raise ConfigurationError("nonlinearity.gamma: must be positive", key="nonlinearity.gamma")
    if v["incident.kind"] not in ("plane", "none"):
        raise ConfigurationError(f"incident.kind: expected plane or none, got {v['incident.kind']!r}", key="incident.kind")
    if not abs(v["incident.angle"]) < math.pi:
        raise ConfigurationError("incident.angle: must satisfy |angle| < pi", key="incident.angle")
    rc = RunConfig(ctx, v, text)
    rc.solver()  # validates solver.* keys
    return rc
