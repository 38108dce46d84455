"""Triangulations of the disk B_R with a tagged obstacle and an S_R node ring.

Generated meshes are ring structured: between ``r0`` and ``R`` every ring
carries the same number ``M`` of nodes, with alternating half-step offsets and
geometrically graded radii so the triangles stay close to equilateral.  A
mode-``n`` perturbation introduced inside ``r0`` reaches ``S_R`` damped by
roughly ``(r0/R)^n``, which keeps the high harmonics of discrete traces clean.
The region ``r < r0`` is filled with rings of decreasing node count around a
central node.  Polygonal obstacles are meshed with ``triangle`` inside a
structured outer annulus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError

ANNULUS = 0
OBSTACLE = 1

MIN_ANGLE_DEG = 20.0
MAGIC = "helmholtz-dtn-mesh v1"


@dataclass(frozen=True)
class DiskObstacle:
    a: float

    def contains(self, pts):
        return np.hypot(pts[:, 0], pts[:, 1]) < self.a

    @property
    def radius(self):
        return self.a

    @property
    def area(self):
        return math.pi * self.a**2


@dataclass(frozen=True)
class PolygonObstacle:
    vertices: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise MeshError("polygon needs at least three 2D vertices", invariant="obstacle")
        object.__setattr__(self, "vertices", tuple(map(tuple, v)))

    @property
    def array(self):
        return np.asarray(self.vertices, dtype=float)

    @property
    def radius(self):
        return float(np.max(np.hypot(*self.array.T)))

    @property
    def area(self):
        x, y = self.array.T
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def contains(self, pts):
        v = self.array
        x, y = pts[:, 0], pts[:, 1]
        inside = np.zeros(len(pts), dtype=bool)
        for (x1, y1), (x2, y2) in zip(v, np.roll(v, -1, axis=0)):
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < xint)
        return inside


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Triangulated disk of radius ``R``.

    Attributes
    ----------
    nodes : (K, 2) float array
    triangles : (M, 3) int array, counterclockwise
    tags : (M,) int array of ``OBSTACLE`` / ``ANNULUS``
    ring : (L,) int array of S_R node indices sorted by angle
    ring_angles : (L,) float array in ``[0, 2 pi)``, strictly increasing
    """

    R: float
    nodes: np.ndarray
    triangles: np.ndarray
    tags: np.ndarray
    ring: np.ndarray
    ring_angles: np.ndarray = field(repr=False)

    @property
    def n_nodes(self):
        return len(self.nodes)

    def areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges(self):
        """Unique undirected edges and their use counts."""
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def h_max(self):
        e, _ = self.edges()
        return float(np.max(np.linalg.norm(self.nodes[e[:, 0]] - self.nodes[e[:, 1]], axis=1)))

    def min_angle(self):
        """Smallest interior angle over all triangles, in degrees."""
        p = self.nodes[self.triangles]
        angs = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            c = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angs.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
        return float(np.min(angs))

    def region_area(self, tag):
        return float(np.sum(self.areas()[self.tags == tag]))

    def validate(self):
        validate(self)
        return self


def _fail(invariant, message):
    raise MeshError(f"{invariant}: {message}", invariant=invariant)


def _boundary_edges(triangles):
    t = triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq, counts


def validate(mesh: Mesh2D) -> None:
    """Raise :class:`MeshError` naming the first violated invariant."""
    R = mesh.R
    nodes, tris = mesh.nodes, mesh.triangles
    if nodes.ndim != 2 or nodes.shape[1] != 2 or not np.all(np.isfinite(nodes)):
        _fail("nodes", "node array must be finite with shape (K, 2)")
    if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) == 0:
        _fail("triangles", "triangle array must have shape (M, 3), M > 0")
    if tris.min() < 0 or tris.max() >= len(nodes):
        _fail("triangles", "triangle references a node index out of range")
    if len(mesh.tags) != len(tris) or not np.all(np.isin(mesh.tags, (ANNULUS, OBSTACLE))):
        _fail("tags", f"each triangle needs a tag in {{{ANNULUS}, {OBSTACLE}}}")
    area = mesh.areas()
    bad = np.flatnonzero(area <= 0)
    if bad.size:
        _fail("orientation", f"triangle {bad[0]} is not counterclockwise (signed area {area[bad[0]]:.3e})")
    bad = np.flatnonzero(area <= 1e-14 * R * R)
    if bad.size:
        _fail("nonzero_area", f"triangle {bad[0]} is degenerate")
    edges, counts = _boundary_edges(tris)
    if np.any(counts > 2):
        i = int(np.flatnonzero(counts > 2)[0])
        _fail("conformity", f"edge {tuple(edges[i])} is shared by {counts[i]} triangles")
    bnodes = np.unique(edges[counts == 1])
    r = np.hypot(nodes[bnodes, 0], nodes[bnodes, 1])
    off = np.flatnonzero(np.abs(r - R) > 1e-12 * R)
    if off.size:
        _fail("ring_on_circle", f"boundary node {bnodes[off[0]]} lies at radius {r[off[0]]!r}, not on S_R")
    ring = np.asarray(mesh.ring)
    if set(ring.tolist()) != set(bnodes.tolist()) or len(ring) != len(bnodes):
        _fail("ring", "boundary ring does not match the set of boundary-edge nodes")
    ang = np.asarray(mesh.ring_angles)
    if np.any(np.diff(ang) <= 0) or ang[0] < 0 or ang[-1] >= 2 * math.pi:
        _fail("ring_order", "ring angles must increase strictly within [0, 2 pi)")
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
    if gaps.max() > 3.0 * gaps.mean():
        _fail("ring_coverage", f"max angular gap {gaps.max():.3e} exceeds 3x mean gap {gaps.mean():.3e}")
    # each ring arc must be a boundary edge
    bset = {tuple(e) for e in edges[counts == 1]}
    for i, j in zip(ring, np.roll(ring, -1)):
        if (min(i, j), max(i, j)) not in bset:
            _fail("conformity", f"ring neighbours {i} and {j} are not joined by a boundary edge")
    if np.any(mesh.tags == OBSTACLE):
        c = nodes[tris[mesh.tags == OBSTACLE]].reshape(-1, 2)
        if np.max(np.hypot(c[:, 0], c[:, 1])) >= R * (1 - 1e-12):
            _fail("obstacle_inside", "obstacle region touches S_R")


# ----------------------------------------------------------------- generation


def _stitch(inner, inner_ang, outer, outer_ang):
    """Triangulate the band between two closed node rings by angular merge."""
    m1, m2 = len(inner), len(outer)
    a0 = inner_ang[0]
    A = a0 + np.mod(np.asarray(inner_ang) - a0, 2 * math.pi)
    A = np.append(A, A[0] + 2 * math.pi)
    rel = np.mod(np.asarray(outer_ang) - a0 + math.pi, 2 * math.pi) - math.pi
    j0 = int(np.argmin(np.abs(rel)))
    order = [(j0 + k) % m2 for k in range(m2)]
    B = a0 + rel[j0] + np.mod(np.asarray(outer_ang)[order] - outer_ang[j0], 2 * math.pi)
    B = np.append(B, B[0] + 2 * math.pi)
    out_idx = [outer[o] for o in order]
    tris = []
    ci = cj = 0
    while ci < m1 or cj < m2:
        adv_inner = cj == m2 or (ci < m1 and A[ci + 1] - B[cj] < B[cj + 1] - A[ci])
        if adv_inner:
            tris.append((inner[ci % m1], inner[(ci + 1) % m1], out_idx[cj % m2]))
            ci += 1
        else:
            tris.append((inner[ci % m1], out_idx[(cj + 1) % m2], out_idx[cj % m2]))
            cj += 1
    return tris


class _Builder:
    def __init__(self):
        self.nodes = []
        self.tris = []

    def ring(self, r, count, offset):
        ang = np.mod(offset + 2 * math.pi * np.arange(count) / count, 2 * math.pi)
        start = len(self.nodes)
        self.nodes.extend(zip(r * np.cos(ang), r * np.sin(ang)))
        return list(range(start, start + count)), ang

    def point(self, x, y):
        self.nodes.append((x, y))
        return len(self.nodes) - 1


def _graded_radii(r_lo, r_hi, q):
    if r_hi <= r_lo:
        return []
    n = max(1, math.ceil(math.log(r_hi / r_lo) / math.log1p(q)))
    return [r_lo * (r_hi / r_lo) ** (k / n) for k in range(1, n + 1)]


def _orient(nodes, tris):
    t = np.asarray(tris, dtype=np.int64)
    p = nodes[t]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    t[neg] = t[neg][:, [0, 2, 1]]
    return t


def _outer_rings(b, inner, inner_ang, radii, M, exact_offset_parity):
    """Append same-count rings at ``radii``; return last ring and its angles."""
    step = 2 * math.pi / M
    for k, r in enumerate(radii):
        offset = 0.5 * step * ((k + 1 + exact_offset_parity) % 2)
        ring, ang = b.ring(r, M, offset)
        b.tris.extend(_stitch(inner, inner_ang, ring, ang))
        inner, inner_ang = ring, ang
    return inner, inner_ang


def _center_fill(b, r0, M):
    """Rings of decreasing count inside radius r0; returns the outermost ring."""
    hc = 2 * math.pi * r0 / M
    K = max(1, math.ceil(r0 / (hc * math.sqrt(3) / 2)))
    center = b.point(0.0, 0.0)
    inner, inner_ang = None, None
    golden = math.pi * (3 - math.sqrt(5))
    for k in range(1, K + 1):
        r = r0 * k / K
        count = M if k == K else max(6, round(2 * math.pi * r / hc))
        offset = 0.0 if k == K else (golden * k) % (2 * math.pi / count)
        ring, ang = b.ring(r, count, offset)
        if inner is None:
            b.tris.extend((center, ring[i], ring[(i + 1) % count]) for i in range(count))
        else:
            b.tris.extend(_stitch(inner, inner_ang, ring, ang))
        inner, inner_ang = ring, ang
    return inner, inner_ang


def _finish(b, R, obstacle, last_ring, last_ang):
    nodes = np.asarray(b.nodes, dtype=float)
    tris = _orient(nodes, b.tris)
    ring = np.asarray(last_ring)
    ang = np.asarray(last_ang)
    order = np.argsort(ang)
    ring, ang = ring[order], ang[order]
    # snap S_R nodes exactly
    nodes[ring] = R * np.column_stack([np.cos(ang), np.sin(ang)])
    cent = nodes[tris].mean(axis=1)
    tags = np.where(obstacle.contains(cent), OBSTACLE, ANNULUS)
    return Mesh2D(float(R), nodes, tris, tags.astype(np.int64), ring, ang)


def _check_request(R, radius, h):
    if not (R > 0 and h > 0):
        raise MeshError(f"R and h must be positive (R={R}, h={h})", invariant="request")
    if radius >= R:
        raise MeshError(f"obstacle radius {radius} must be below R={R}", invariant="clearance")
    if R - radius < h:
        raise MeshError(f"clearance R - a = {R - radius:.4g} is below h={h}", invariant="clearance")
    if h > radius:
        raise MeshError(f"h={h} is too large to resolve an obstacle of radius {radius}", invariant="resolution")


def mesh_disk(R: float, obstacle, h: float) -> Mesh2D:
    """Mesh ``B_R`` around a disk (radius ``a`` or :class:`DiskObstacle`) or polygon.

    Raises
    ------
    MeshError
        If the obstacle does not fit inside ``B_R`` with clearance ``h``, if
        ``h`` cannot resolve it, or if the result fails the quality gate.
    """
    if isinstance(obstacle, (int, float)):
        obstacle = DiskObstacle(float(obstacle))
    if isinstance(obstacle, PolygonObstacle):
        return _mesh_polygon(R, obstacle, h)
    a = obstacle.a
    _check_request(R, a, h)
    M = max(16, math.ceil(2 * math.pi * R / h))
    q = (2 * math.pi / M) * math.sqrt(3) / 2
    r0 = min(R / 4, a)
    b = _Builder()
    ring, ang = _center_fill(b, r0, M)
    radii = _graded_radii(r0, a, q) + _graded_radii(max(r0, a), R, q)
    ring, ang = _outer_rings(b, ring, ang, radii, M, 0)
    mesh = _finish(b, R, obstacle, ring, ang)
    return _quality_gate(mesh, h)


def _mesh_polygon(R, poly: PolygonObstacle, h):
    import triangle as tr

    rp_obst = poly.radius
    _check_request(R, rp_obst, h)
    v = poly.array
    rp = rp_obst + min(h, (R - rp_obst) / 2)
    M = max(16, math.ceil(2 * math.pi * R / h))
    q = (2 * math.pi / M) * math.sqrt(3) / 2
    # polygon edges split to length <= h
    pts, segs = [], []
    for p0, p1 in zip(v, np.roll(v, -1, axis=0)):
        k = max(1, math.ceil(np.linalg.norm(p1 - p0) / h))
        for s in range(k):
            pts.append(p0 + (p1 - p0) * s / k)
    npoly = len(pts)
    segs = [(i, (i + 1) % npoly) for i in range(npoly)]
    ang = 2 * math.pi * np.arange(M) / M
    circ = rp * np.column_stack([np.cos(ang), np.sin(ang)])
    all_pts = np.vstack([np.asarray(pts), circ])
    segs += [(npoly + i, npoly + (i + 1) % M) for i in range(M)]
    max_area = math.sqrt(3) / 4 * h * h
    res = tr.triangulate(
        {"vertices": all_pts, "segments": np.asarray(segs)}, f"pq{MIN_ANGLE_DEG + 5:g}a{max_area:.17g}YQ"
    )
    tnodes = res["vertices"]
    b = _Builder()
    b.nodes.extend(map(tuple, tnodes))
    b.tris.extend(map(tuple, res["triangles"]))
    ring_nodes = list(range(npoly, npoly + M))
    ring_ang = ang
    ring, ring_ang = _outer_rings(b, ring_nodes, ring_ang, _graded_radii(rp, R, q), M, 0)
    mesh = _finish(b, R, poly, ring, ring_ang)
    return _quality_gate(mesh, h)


def _quality_gate(mesh, h):
    validate(mesh)
    ang = mesh.min_angle()
    if ang < MIN_ANGLE_DEG:
        raise MeshError(f"minimum angle {ang:.2f} deg below {MIN_ANGLE_DEG} deg", invariant="quality")
    hm = mesh.h_max()
    if hm > 1.5 * h:
        raise MeshError(f"h_max = {hm:.4g} exceeds 1.5 h = {1.5 * h:.4g}", invariant="quality")
    return mesh


# ------------------------------------------------------------------------ IO


def export_mesh(mesh: Mesh2D, path) -> None:
    """Write ``mesh`` in the plain-text ``helmholtz-dtn-mesh v1`` format."""
    lines = [MAGIC, f"R {mesh.R:.17g}", f"nodes {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [f"{i} {j} {k} {t}" for (i, j, k), t in zip(mesh.triangles, mesh.tags)]
    lines.append(f"ring {len(mesh.ring)}")
    lines += [str(i) for i in mesh.ring]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0] != MAGIC:
        raise MeshError(f"{path}: first line must be '{MAGIC}'", invariant="format")
    pos = 1
    R = None
    if lines[pos].startswith("R "):
        R = float(lines[pos].split()[1])
        pos += 1

    def section(name):
        nonlocal pos
        head = lines[pos].split() if pos < len(lines) else []
        if len(head) != 2 or head[0] != name:
            raise MeshError(f"{path}: expected '{name} <count>' at data line {pos + 1}", invariant="format")
        count = int(head[1])
        body = lines[pos + 1 : pos + 1 + count]
        if len(body) != count:
            raise MeshError(f"{path}: section '{name}' is truncated", invariant="format")
        pos += 1 + count
        return body

    try:
        nodes = np.array([[float(x) for x in ln.split()] for ln in section("nodes")], dtype=float)
        tri_rows = np.array([[int(x) for x in ln.split()] for ln in section("triangles")], dtype=np.int64)
        ring = np.array([int(ln) for ln in section("ring")], dtype=np.int64)
    except ValueError as exc:
        raise MeshError(f"{path}: malformed entry ({exc})", invariant="format") from exc
    if nodes.ndim != 2 or nodes.shape[1] != 2 or tri_rows.ndim != 2 or tri_rows.shape[1] != 4:
        raise MeshError(f"{path}: nodes need 2 columns and triangles 4", invariant="format")
    return R, nodes, tri_rows, ring


def import_mesh(path) -> Mesh2D:
    """Read and validate a mesh file.

    ``R`` is taken from the optional ``R`` line or else from the mean ring
    radius.  Ring nodes within ``1e-6 R`` of the circle are snapped onto it;
    anything further away is rejected with the node index.  The ring is
    rebuilt from boundary edges and sorted by angle.
    """
    R, nodes, tri_rows, ring_in = _parse(path)
    tris, tags = tri_rows[:, :3], tri_rows[:, 3]
    if ring_in.size and (ring_in.min() < 0 or ring_in.max() >= len(nodes)):
        raise MeshError(f"{path}: ring index out of range", invariant="ring")
    if tris.min() < 0 or tris.max() >= len(nodes):
        raise MeshError(f"{path}: triangle index out of range", invariant="triangles")
    edges, counts = _boundary_edges(tris)
    bnodes = np.unique(edges[counts == 1])
    if R is None:
        R = float(np.mean(np.hypot(*nodes[bnodes].T)))
    r = np.hypot(nodes[bnodes, 0], nodes[bnodes, 1])
    off = np.flatnonzero(np.abs(r - R) > 1e-6 * R)
    if off.size:
        i = int(bnodes[off[0]])
        raise MeshError(
            f"{path}: boundary node {i} at radius {r[off[0]]:.17g} is off the circle R={R:.17g}",
            invariant="ring_on_circle",
        )
    nodes = nodes.copy()
    snap = bnodes[np.abs(r - R) > 1e-12 * R]
    nodes[snap] *= (R / np.hypot(nodes[snap, 0], nodes[snap, 1]))[:, None]
    ang = np.mod(np.arctan2(nodes[bnodes, 1], nodes[bnodes, 0]), 2 * math.pi)
    order = np.argsort(ang, kind="stable")
    ring, ang = bnodes[order], ang[order]
    if ring_in.size and set(ring_in.tolist()) != set(ring.tolist()):
        raise MeshError(f"{path}: listed ring differs from the boundary-edge nodes", invariant="ring")
    mesh = Mesh2D(float(R), nodes, tris, tags, ring, ang)
    validate(mesh)
    return mesh
