"""Flat-strip grafting along a simple closed geodesic.

A loop is a cyclic list of vertex ids joined by mesh edges. At every loop
vertex the incident corners split into a left side (counter-clockwise from
the outgoing to the incoming edge) and a right side. The loop is a discrete
geodesic when both side angles are at least ``pi``; the turning residual is
``max(0, pi - min(left, right))``.

Grafting cuts the surface along the loop, keeps the original vertex ids on
the right side, gives the left side fresh copies and glues in ``m`` columns
of flat rectangles, ``length(edge) x w/m`` each, split along a diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .conformal import uniformize
from .mesh import (DiscreteMetric, Mesh, angle_defect_curvature, corner_angles,
                   dual_areas, total_area)


class LoopError(ValueError):
    pass


class DegenerateLoopError(LoopError):
    """The loop is contractible or collapses under shortening."""


class ShorteningError(RuntimeError):
    pass


@dataclass(frozen=True)
class GraftSpec:
    loop: tuple
    w: float
    length: float
    residual: float
    tol: float
    iterations: int = 0
    history: tuple = field(default=(), repr=False)


def _edge_lengths(mesh, metric):
    return {tuple(e): l for e, l in zip(mesh.edges.tolist(), metric.lengths)}


def loop_length(mesh: Mesh, metric: DiscreteMetric, loop) -> float:
    lengths = _edge_lengths(mesh, metric)
    n = len(loop)
    return float(sum(lengths[tuple(sorted((loop[i], loop[(i + 1) % n])))] for i in range(n)))


def _ring_neighbours(mesh, v):
    F = mesh.faces
    return [(int(F[f, (k + 1) % 3]), f, k) for f, k in mesh.vertex_ring(v)]


def check_loop(mesh: Mesh, loop) -> list[int]:
    loop = [int(v) for v in loop]
    if len(loop) < 3:
        raise LoopError("a loop needs at least three vertices")
    if len(set(loop)) != len(loop):
        raise LoopError("loop is not simple (a vertex repeats)")
    he = mesh.halfedge_face
    for i, v in enumerate(loop):
        w = loop[(i + 1) % len(loop)]
        if (v, w) not in he and (w, v) not in he:
            raise LoopError(f"loop vertices {v} and {w} are not joined by an edge")
    return loop


def _sides(mesh, loop, i):
    """Left and right corner lists ``[(f, k)]`` at ``loop[i]``."""
    n = len(loop)
    v, a, b = loop[i], loop[i - 1], loop[(i + 1) % n]
    ring = _ring_neighbours(mesh, v)
    nbrs = [x[0] for x in ring]
    try:
        jb, ja = nbrs.index(b), nbrs.index(a)
    except ValueError as exc:
        raise LoopError(f"loop is not an edge path at vertex {v}") from exc
    d = len(ring)
    left, right = [], []
    j = jb
    while j != ja:
        left.append(ring[j][1:])
        j = (j + 1) % d
    while j != jb:
        right.append(ring[j][1:])
        j = (j + 1) % d
    return left, right


def side_angles(mesh: Mesh, metric: DiscreteMetric, loop) -> np.ndarray:
    """``(n, 2)`` left and right angle sums along the loop."""
    ang = corner_angles(mesh, metric)
    out = np.empty((len(loop), 2))
    for i in range(len(loop)):
        left, right = _sides(mesh, loop, i)
        out[i, 0] = sum(ang[f, k] for f, k in left)
        out[i, 1] = sum(ang[f, k] for f, k in right)
    return out


def turning_residual(mesh: Mesh, metric: DiscreteMetric, loop) -> float:
    s = side_angles(mesh, metric, loop)
    return float(max(0.0, np.max(np.pi - s.min(axis=1))))


def _components_after_cut(mesh, loop):
    """Faces grouped into components after cutting along the loop.

    Returns a list of ``(faces, euler_characteristic)``.
    """
    n = len(loop)
    cut = {frozenset((loop[i], loop[(i + 1) % n])) for i in range(n)}
    F = mesh.faces
    parent = list(range(mesh.n_faces))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e, (f0, f1) in zip(mesh.edges.tolist(), mesh.edge_faces.tolist()):
        if f1 >= 0 and frozenset(e) not in cut:
            parent[find(f0)] = find(f1)
    groups: dict[int, list[int]] = {}
    for f in range(mesh.n_faces):
        groups.setdefault(find(f), []).append(f)
    out = []
    on_loop = set(loop)
    for faces in groups.values():
        verts, edges = set(), set()
        for f in faces:
            tri = F[f].tolist()
            verts.update(tri)
            for k in range(3):
                edges.add(frozenset((tri[k], tri[(k + 1) % 3])))
        # loop vertices are duplicated by the cut only when both sides meet here;
        # count each component separately with its own copies
        chi = len(verts) - len(edges) + len(faces)
        out.append((faces, chi, bool(verts & on_loop)))
    return out


def is_contractible(mesh: Mesh, loop) -> bool:
    """A simple loop is contractible exactly when it bounds a disk."""
    comps = _components_after_cut(mesh, loop)
    return len(comps) > 1 and any(chi == 1 for _, chi, _ in comps)


def _link_path(mesh, loop, i, side):
    """Vertices of the one-ring of ``loop[i]`` strictly between its loop neighbours."""
    n = len(loop)
    v, a, b = loop[i], loop[i - 1], loop[(i + 1) % n]
    nbrs = [x[0] for x in _ring_neighbours(mesh, v)]
    d = len(nbrs)
    jb, ja = nbrs.index(b), nbrs.index(a)
    if side == "left":
        # counter-clockwise from b to a, traversed from a back to b
        seq, j = [], (jb + 1) % d
        while j != ja:
            seq.append(nbrs[j])
            j = (j + 1) % d
        return seq[::-1]
    seq, j = [], (ja + 1) % d
    while j != jb:
        seq.append(nbrs[j])
        j = (j + 1) % d
    return seq


def _tidy(loop):
    """Remove immediate backtracks ``x, y, x`` until none remain."""
    changed = True
    loop = list(loop)
    while changed and len(loop) >= 3:
        changed = False
        n = len(loop)
        for i in range(n):
            if loop[i - 1] == loop[(i + 1) % n]:
                j = (i + 1) % n
                for idx in sorted({i, j}, reverse=True):
                    loop.pop(idx)
                changed = True
                break
    return loop


def shorten_to_geodesic(mesh: Mesh, metric: DiscreteMetric, initial_loop, tol: float = 1e-6,
                        max_iter: int = 10000, w: float = 0.0) -> GraftSpec:
    """Tighten a loop until every vertex has both side angles ``>= pi - tol``.

    Each step picks the vertex with the smallest side angle (ties broken by
    vertex id) and replaces it with the one-ring path on that side when this
    shortens the loop. Contractible loops raise DegenerateLoopError.
    """
    loop = check_loop(mesh, initial_loop)
    if is_contractible(mesh, loop):
        raise DegenerateLoopError("loop bounds a disk: shortening collapses it to a point")
    lengths = _edge_lengths(mesh, metric)

    def seg(u, v):
        return lengths[(u, v) if u < v else (v, u)]

    history = []
    blocked: set = set()
    for it in range(max_iter):
        s = side_angles(mesh, metric, loop)
        res = float(max(0.0, np.max(np.pi - s.min(axis=1))))
        history.append(res)
        if res <= tol:
            return GraftSpec(tuple(loop), float(w), loop_length(mesh, metric, loop), res, tol,
                             it, tuple(history))
        order = sorted(range(len(loop)), key=lambda i: (s[i].min(), loop[i]))
        progressed = False
        for i in order:
            if s[i].min() >= np.pi - tol:
                break
            side = "left" if s[i, 0] < s[i, 1] else "right"
            key = (tuple(loop), i)
            if key in blocked:
                continue
            a, v, b = loop[i - 1], loop[i], loop[(i + 1) % len(loop)]
            link = _link_path(mesh, loop, i, side)
            new_len = sum(seg(x, y) for x, y in zip([a] + link, link + [b]))
            if new_len >= seg(a, v) + seg(v, b) - 1e-15:
                blocked.add(key)
                continue
            candidate = _tidy(loop[:i] + link + loop[i + 1:])
            if len(candidate) < 3:
                raise DegenerateLoopError("loop collapsed during shortening")
            if len(set(candidate)) != len(candidate):
                blocked.add(key)
                continue
            loop = candidate
            progressed = True
            break
        if not progressed:
            raise ShorteningError(f"shortening stalled with turning residual {res:.3e}")
    raise ShorteningError(f"no convergence after {max_iter} iterations")


# -- surgery --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GraftResult:
    mesh: Mesh
    metric: DiscreteMetric
    spec: GraftSpec
    columns: int
    strip_vertices: np.ndarray    # interior strip vertices
    seam_right: np.ndarray        # original loop vertex ids
    seam_left: np.ndarray         # their left-side copies
    area_before: float
    area_after: float

    @property
    def graft_mass(self) -> float:
        return self.spec.w * self.spec.length


def graft(mesh: Mesh, metric: DiscreteMetric, spec: GraftSpec, columns: int | None = None) -> GraftResult:
    """Cut along ``spec.loop`` and insert a flat strip of width ``spec.w``.

    ``w = 0`` returns the input unchanged.
    """
    loop = check_loop(mesh, spec.loop)
    area0 = total_area(mesh, metric)
    w = float(spec.w)
    if w < 0:
        raise ValueError("strip width must be >= 0")
    empty = np.zeros(0, dtype=int)
    if w == 0:
        return GraftResult(mesh, metric, spec, 0, empty, np.array(loop), np.array(loop),
                           area0, area0)
    n = len(loop)
    lengths = _edge_lengths(mesh, metric)
    seg = [lengths[tuple(sorted((loop[i], loop[(i + 1) % n])))] for i in range(n)]
    if columns is None:
        columns = max(1, int(round(w / (sum(seg) / n))))
    m = int(columns)
    # left-side corners move to fresh copies
    nv = mesh.n_vertices
    copy = {v: nv + i for i, v in enumerate(loop)}
    F = mesh.faces.copy()
    for i in range(n):
        left, _ = _sides(mesh, loop, i)
        for f, k in left:
            F[f, k] = copy[loop[i]]
    # column j vertex for loop index i: j = 0 original, j = m left copy
    def col(j, i):
        v = loop[i % n]
        if j == 0:
            return v
        if j == m:
            return copy[v]
        return nv + n + (j - 1) * n + (i % n)

    new_faces = []
    new_len = {}
    h = w / m
    for j in range(m):
        for i in range(n):
            a0, a1 = col(j, i), col(j, i + 1)
            b0, b1 = col(j + 1, i), col(j + 1, i + 1)
            new_faces += [(a0, a1, b1), (a0, b1, b0)]
            d = math.hypot(seg[i], h)
            for (p, q), val in (((a0, a1), seg[i]), ((a1, b1), h), ((a0, b1), d),
                                ((b1, b0), seg[i]), ((b0, a0), h)):
                new_len[(p, q) if p < q else (q, p)] = val
    faces = np.concatenate([F, np.array(new_faces, dtype=F.dtype)])
    n_total = nv + n + (m - 1) * n
    try:
        out_mesh = Mesh(faces, n_total, genus=mesh.genus)
    except ValueError as exc:
        raise LoopError(f"cut along the loop is not valid: {exc}") from exc
    # original edges keep their lengths under the vertex renaming
    old = {}
    for f in range(mesh.n_faces):
        for k in range(3):
            u, v = mesh.faces[f, k], mesh.faces[f, (k + 1) % 3]
            U, V = F[f, k], F[f, (k + 1) % 3]
            old[(U, V) if U < V else (V, U)] = lengths[(u, v) if u < v else (v, u)]
    old.update(new_len)
    out_metric = DiscreteMetric(np.array([old[tuple(e)] for e in out_mesh.edges.tolist()]))
    out_metric.validate(out_mesh)
    strip = np.arange(nv + n, n_total)
    return GraftResult(out_mesh, out_metric, spec, m, strip, np.array(loop),
                       np.array([copy[v] for v in loop]), area0,
                       total_area(out_mesh, out_metric))


def curvature_strata(result: GraftResult) -> dict:
    """Pointwise curvature split into bulk, seam and strip-interior vertices."""
    K = angle_defect_curvature(result.mesh, result.metric) / dual_areas(result.mesh, result.metric)
    seam = np.concatenate([result.seam_right, result.seam_left])
    mask = np.ones(result.mesh.n_vertices, dtype=bool)
    mask[seam] = False
    mask[result.strip_vertices] = False

    def stats(x):
        return {"min": float(x.min()), "max": float(x.max()), "count": int(x.size)} if x.size else None

    return {"bulk": stats(K[mask]), "seam": stats(K[np.unique(seam)]),
            "strip": stats(K[result.strip_vertices])}


def domination_check(result: GraftResult, slack: float = 1e-5, tol: float = 1e-10) -> dict:
    """Write the grafted metric as ``e^{2u} h0`` with ``h0`` hyperbolic; require ``u >= -slack``."""
    u = -uniformize(result.mesh, result.metric, tol=tol)
    return {"w": result.spec.w, "min_u": float(u.min()), "max_u": float(u.max()),
            "slack": slack, "passed": bool(u.min() >= -slack),
            "curvature": curvature_strata(result), "u": u}


def area_identity_defect(result: GraftResult) -> float:
    return abs(result.area_after - result.area_before - result.graft_mass)


def normalization_correction(area0: float, graft_mass: float, chi: int) -> float:
    """``pi log(area0 / (area0 + graft_mass)) chi``."""
    if not area0 > 0:
        raise ValueError("area0 must be positive")
    if not graft_mass >= 0:
        raise ValueError("graft_mass must be >= 0")
    return math.pi * math.log(area0 / (area0 + graft_mass)) * chi


def monotonicity_probe(mesh: Mesh, metric: DiscreteMetric, spec: GraftSpec, weights,
                       slack: float = 1e-5, tol: float = 1e-10) -> dict:
    """Check ``u(w1) <= u(w2) + slack`` on the original vertices for increasing weights."""
    weights = sorted(float(w) for w in weights)
    nv = mesh.n_vertices
    us = []
    for w in weights:
        res = graft(mesh, metric, replace(spec, w=w))
        us.append(domination_check(res, slack, tol)["u"][:nv])
    worst = max((float(np.max(a - b)) for a, b in zip(us, us[1:])), default=-math.inf)
    return {"weights": weights, "max_violation": worst, "slack": slack,
            "passed": bool(worst <= slack)}
