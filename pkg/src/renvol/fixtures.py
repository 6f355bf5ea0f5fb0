"""Test surfaces with closed-form geometry.

* ``flat_torus``: square grid on the unit torus, every defect zero.
* ``polygon_surface(g, level)``: the regular hyperbolic ``4g``-gon with
  interior angles ``2*pi/(4g)``, opposite sides glued. For ``g = 2`` this is
  the Bolza surface. The polygon is fanned from its centre through the
  corners and side midpoints, then refined ``level`` times by geodesic
  midpoint subdivision; edge lengths are hyperbolic distances, so every
  triangle is an exact geodesic triangle.
* ``geodesic_disk(k, radius)``: polar mesh of a geodesic disk of constant
  curvature ``-k**2`` (``k = 0`` is the flat disk).
* ``tetrahedron``: regular tetrahedron boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .mesh import DiscreteMetric, Mesh

FIXTURES = ("flat_torus", "octagon_g2", "polygon_g3", "disk_k", "tetrahedron")


@dataclass(frozen=True, eq=False)
class Fixture:
    name: str
    mesh: Mesh
    metric: DiscreteMetric
    level: int = 0
    tags: dict = field(default_factory=dict)


# -- hyperboloid model helpers ------------------------------------------------

def _minkowski(p, q):
    return p[..., 0] * q[..., 0] + p[..., 1] * q[..., 1] - p[..., 2] * q[..., 2]


def _hyp_point(radius, theta):
    return np.array([np.sinh(radius) * np.cos(theta),
                     np.sinh(radius) * np.sin(theta), np.cosh(radius)])


def _hyp_midpoint(p, q):
    m = p + q
    return m / np.sqrt(-_minkowski(m, m))


def _hyp_dist(p, q):
    return float(np.arccosh(max(1.0, -_minkowski(p, q))))


# -- generic builders -----------------------------------------------------------

def _weld(tris, points, keys, canon):
    """Merge chart points with equal canonical keys into surface vertices."""
    ids, rep = {}, []
    vmap = np.empty(len(points), dtype=np.int64)
    for n, key in enumerate(keys):
        c = canon(key)
        if c not in ids:
            ids[c] = len(ids)
            rep.append(n)
        vmap[n] = ids[c]
    faces = np.array([[vmap[a], vmap[b], vmap[c]] for a, b, c in tris], dtype=np.int64)
    return faces, vmap, rep


def _chart_lengths(mesh, tris, points, dist):
    lengths = np.full(mesh.n_edges, np.nan)
    idx = mesh.edge_index
    for (a, b, c), tri in zip(tris, mesh.faces):
        for (p, q), (u, v) in zip(((a, b), (b, c), (c, a)),
                                  ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0]))):
            e = idx[(int(min(u, v)), int(max(u, v)))]
            d = dist(points[p], points[q])
            if np.isnan(lengths[e]):
                lengths[e] = d
            elif abs(lengths[e] - d) > 1e-9 * max(1.0, d):
                raise AssertionError(f"side pairing mismatch on edge {e}: {lengths[e]} vs {d}")
    return lengths


# -- regular 4g-gon surfaces ----------------------------------------------------------

def polygon_geometry(genus: int) -> dict:
    """Circumradius, inradius and side length of the regular ``4g``-gon."""
    n = 4 * genus
    alpha = 2 * np.pi / n
    # cosh(inradius) = cos(alpha/2) / sin(pi/n); cosh(R) = cot(pi/n) cot(alpha/2)
    inr = np.arccosh(np.cos(alpha / 2) / np.sin(np.pi / n))
    circ = np.arccosh(1.0 / (np.tan(np.pi / n) * np.tan(alpha / 2)))
    side = 2 * np.arcsinh(np.sinh(circ) * np.sin(np.pi / n))
    return {"n_sides": n, "angle": alpha, "inradius": inr, "circumradius": circ,
            "side": side, "systole": 2 * inr}


def polygon_surface(genus: int, level: int = 3) -> Fixture:
    if genus < 2:
        raise ValueError("polygon surfaces need genus >= 2")
    if level < 1:
        raise ValueError("level >= 1 is required for a simplicial complex")
    geo = polygon_geometry(genus)
    n = geo["n_sides"]
    corners = [_hyp_point(geo["circumradius"], 2 * np.pi * i / n) for i in range(n)]
    # per-chart side membership of corners: corner i is t=0 on side i and t=1
    # on side i-1, so each fan triangle gets its own copies of the corners
    pts, kys, new_tris = [_hyp_point(0.0, 0.0)], [("centre",)], []
    for i in range(n):
        j = (i + 1) % n
        base = len(pts)
        mid = _hyp_midpoint(corners[i], corners[j])
        pts += [corners[i], mid, corners[j]]
        kys += [("side", i, Fraction(0)), ("side", i, Fraction(1, 2)), ("side", i, Fraction(1))]
        new_tris += [(0, base, base + 1), (0, base + 1, base + 2)]
    points, keys, tris = pts, kys, new_tris

    for _ in range(level):
        tris = _subdivide(tris, points, keys, _hyp_midpoint, {})

    half = 2 * genus

    def canon(key):
        if key[0] == "side":
            s, t = key[1], key[2]
            if t == 0 or t == 1:
                return ("corner",)
            if s >= half:
                return ("side", s - half, 1 - t)
            return ("side", s, t)
        return key

    faces, vmap, rep = _weld(tris, points, keys, canon)
    mesh = Mesh(faces, len(rep), genus=genus)
    lengths = _chart_lengths(mesh, tris, points, _hyp_dist)
    metric = DiscreteMetric(lengths)
    metric.validate(mesh)

    centre = int(vmap[0])
    side_mid = []
    for s in range(n):
        side_mid.append(int(vmap[keys.index(("side", s, Fraction(1, 2)))]))
    # the closed geodesic through the centre joining the midpoints of sides 0
    # and 2g: a systole of the surface
    loop = _chart_geodesic_path(keys, vmap, points, level, n, geo)
    tags = {"centre": centre, "side_midpoints": side_mid, "systole_loop": loop,
            "geometry": {k: float(v) for k, v in geo.items()}}
    return Fixture(f"polygon_g{genus}", mesh, metric, level, tags)


def _subdivide(tris, points, keys, midpoint, cache):
    """1-to-4 subdivision where midpoints are shared by chart-point keys.

    Points are identified by their key *within the polygon chart* so adjacent
    fan triangles reuse the same midpoint on a common spoke.
    """
    def chart_key(n):
        k = keys[n]
        if k[0] == "side":
            s, t = k[1], k[2]
            # corners and side points are unique within the chart up to the
            # corner coincidence (side i, t=1) == (side i+1, t=0)
            return ("side", s, t) if 0 < t < 1 else ("corner", (s + (1 if t == 1 else 0)) % n_sides)
        return k

    n_sides = sum(1 for k in keys if k[0] == "side" and k[2] == 0)
    out = []

    def mid(a, b):
        ka, kb = chart_key(a), chart_key(b)
        tag = tuple(sorted((repr(ka), repr(kb))))
        if tag in cache:
            return cache[tag]
        points.append(midpoint(points[a], points[b]))
        k1, k2 = keys[a], keys[b]
        if k1[0] == "side" and k2[0] == "side" and k1[1] == k2[1]:
            keys.append(("side", k1[1], (k1[2] + k2[2]) / 2))
        else:
            keys.append(("int", tag))
        cache[tag] = len(points) - 1
        return cache[tag]

    for a, b, c in tris:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return out


def _chart_geodesic_path(keys, vmap, points, level, n, geo):
    """Surface vertices on the segment from side-0 midpoint through the centre
    to the side-``n/2`` midpoint (which is glued back to the start)."""
    m0 = points[keys.index(("side", 0, Fraction(1, 2)))]
    m1 = points[keys.index(("side", n // 2, Fraction(1, 2)))]
    centre = points[0]
    on_line = []
    for idx, p in enumerate(points):
        for end in (m0, m1):
            d = _hyp_dist(centre, p) + _hyp_dist(p, end) - _hyp_dist(centre, end)
            if d < 1e-7:
                signed = _hyp_dist(centre, p) * (1 if end is m1 else -1)
                on_line.append((signed, int(vmap[idx])))
                break
    on_line.sort()
    path = []
    for _, v in on_line:
        if not path or path[-1] != v:
            path.append(v)
    # the two ends are the same glued vertex
    if path[0] == path[-1]:
        path.pop()
    return path


def octagon_g2(level: int = 4) -> Fixture:
    fx = polygon_surface(2, level)
    return Fixture("octagon_g2", fx.mesh, fx.metric, level, fx.tags)


def polygon_g3(level: int = 3) -> Fixture:
    fx = polygon_surface(3, level)
    return Fixture("polygon_g3", fx.mesh, fx.metric, level, fx.tags)


# -- flat and spherical ---------------------------------------------------------------

def flat_torus(n: int = 8, size: float = 1.0) -> Fixture:
    """``n x n`` grid on the square torus of side ``size``."""
    if n < 3:
        raise ValueError("n >= 3 is required for a simplicial torus")

    def vid(i, j):
        return (i % n) * n + (j % n)

    faces = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces += [(a, b, c), (a, c, d)]
    mesh = Mesh(np.array(faces), n * n, genus=1)
    h = size / n
    lengths = np.empty(mesh.n_edges)
    for e, (a, b) in enumerate(mesh.edges):
        ia, ja = divmod(int(a), n)
        ib, jb = divmod(int(b), n)
        di = min((ia - ib) % n, (ib - ia) % n)
        dj = min((ja - jb) % n, (jb - ja) % n)
        lengths[e] = h * np.hypot(di, dj)
    return Fixture("flat_torus", mesh, DiscreteMetric(lengths), n, {"size": size})


def tetrahedron(side: float = 1.0) -> Fixture:
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    mesh = Mesh(faces, 4, genus=0)
    return Fixture("tetrahedron", mesh, DiscreteMetric(np.full(mesh.n_edges, side)))


# -- geodesic disks of constant curvature ------------------------------------------------

def _model_dist(k, r1, t1, r2, t2):
    if k == 0:
        return float(np.sqrt(r1 * r1 + r2 * r2 - 2 * r1 * r2 * np.cos(t1 - t2)))
    c = (np.cosh(k * r1) * np.cosh(k * r2)
         - np.sinh(k * r1) * np.sinh(k * r2) * np.cos(t1 - t2))
    return float(np.arccosh(max(c, 1.0)) / k)


def model_area(k: float, r):
    r = np.asarray(r, dtype=float)
    if k == 0:
        return np.pi * r * r
    return 2 * np.pi * (np.cosh(k * r) - 1) / (k * k)


def model_length(k: float, r):
    r = np.asarray(r, dtype=float)
    if k == 0:
        return 2 * np.pi * r
    return 2 * np.pi * np.sinh(k * r) / k


def geodesic_disk(k: float, radius: float, n_rings: int = 24, min_sectors: int = 12) -> Fixture:
    """Polar mesh of the disk of ``radius`` in curvature ``-k**2``.

    Ring ``i`` sits at geodesic radius ``i * radius / n_rings`` with a sector
    count chosen so arcs are about as long as the radial spacing.
    """
    dr = radius / n_rings
    radii = [0.0]
    counts = [1]
    for i in range(1, n_rings + 1):
        r = i * dr
        m = max(min_sectors, int(np.ceil(float(model_length(k, r)) / dr)))
        m = max(m, counts[-1])
        radii.append(r)
        counts.append(m)
    offsets = np.cumsum([0] + counts)
    coords = [(0.0, 0.0)]
    for i in range(1, n_rings + 1):
        for j in range(counts[i]):
            coords.append((radii[i], 2 * np.pi * j / counts[i]))
    faces = []
    m = counts[1]
    for j in range(m):
        faces.append((0, offsets[1] + j, offsets[1] + (j + 1) % m))
    for i in range(1, n_rings):
        faces += _zip_rings(offsets[i], counts[i], offsets[i + 1], counts[i + 1])
    mesh = Mesh(np.array(faces), len(coords), genus=0, allow_boundary=True)
    lengths = np.array([_model_dist(k, *coords[a], *coords[b]) for a, b in mesh.edges])
    rings = [list(range(offsets[i], offsets[i] + counts[i])) for i in range(n_rings + 1)]
    tags = {"k": k, "radius": radius, "ring_radii": radii, "rings": rings}
    return Fixture("disk_k", mesh, DiscreteMetric(lengths), n_rings, tags)


def _zip_rings(o1, n1, o2, n2):
    """Triangulate the annulus between two concentric rings (CCW)."""
    faces = []
    i = j = 0
    while i < n1 or j < n2:
        a, a2 = o1 + i % n1, o1 + (i + 1) % n1
        b, b2 = o2 + j % n2, o2 + (j + 1) % n2
        # advance whichever ring lags in angle
        if j < n2 and (i >= n1 or (j + 1) / n2 <= (i + 1) / n1):
            faces.append((a, b, b2))
            j += 1
        else:
            faces.append((a, b, a2))
            i += 1
    return faces


def make_fixture(name: str, level: int | None = None, **kwargs) -> Fixture:
    if name == "flat_torus":
        return flat_torus(level or 8, **kwargs)
    if name == "octagon_g2":
        return octagon_g2(4 if level is None else level)
    if name == "polygon_g3":
        return polygon_g3(3 if level is None else level)
    if name == "disk_k":
        return geodesic_disk(kwargs.pop("k", 1.0), kwargs.pop("radius", 2.0),
                             n_rings=level or 24, **kwargs)
    if name == "tetrahedron":
        return tetrahedron(**kwargs)
    raise ValueError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
