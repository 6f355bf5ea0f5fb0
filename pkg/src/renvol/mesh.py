"""Triangle meshes with intrinsic (edge-length) metrics.

A mesh is purely combinatorial: oriented faces over vertex indices. A
:class:`DiscreteMetric` assigns a positive length to every edge; angles,
areas, curvature and the cotangent Laplacian are computed from lengths only.

Conventions
-----------
* Face ``f = (v0, v1, v2)``; its directed edge ``k`` runs from ``v_k`` to
  ``v_{k+1}``. The corner angle at ``v_k`` is opposite edge ``k+1``.
* The face-local frame has its origin at ``v0`` and x-axis along edge 0.
* :func:`cotan_laplacian` is the non-positive operator (trace of the
  Hessian). The curvature formulas in :mod:`renvol.conformal` use its
  negative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MeshError",
    "MetricError",
    "Mesh",
    "DiscreteMetric",
    "ScalarField",
    "angle_defect_curvature",
    "corner_angles",
    "face_areas",
    "dual_areas",
    "cotan_laplacian",
    "integrate",
    "face_frames",
    "load_mesh",
    "save_mesh",
]


class MeshError(ValueError):
    """Invalid mesh topology."""


class MetricError(ValueError):
    """Edge lengths that do not form Euclidean triangles."""

    def __init__(self, message, face=None):
        super().__init__(message)
        self.face = face


ScalarField = np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    """Oriented triangle mesh.

    ``allow_boundary`` is only used by the disk fixtures; every closed-surface
    invariant (two opposite half-edges per edge, Euler characteristic matching
    the genus) is checked at construction otherwise.
    """

    faces: np.ndarray
    n_vertices: int
    genus: int | None = None
    allow_boundary: bool = False
    vertex_ids: tuple = field(default=None)

    def __post_init__(self):
        faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError("faces must have shape (F, 3)")
        if faces.size and (faces.min() < 0 or faces.max() >= self.n_vertices):
            raise MeshError("face refers to unknown vertex")
        if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) \
                or np.any(faces[:, 0] == faces[:, 2]):
            raise MeshError("degenerate face with repeated vertex")
        faces.setflags(write=False)
        object.__setattr__(self, "faces", faces)
        if self.vertex_ids is None:
            object.__setattr__(self, "vertex_ids", tuple(range(self.n_vertices)))
        self._check_topology()

    # -- topology -----------------------------------------------------------

    def _check_topology(self):
        seen = {}
        for f, tri in enumerate(self.faces):
            for k in range(3):
                he = (int(tri[k]), int(tri[(k + 1) % 3]))
                if he in seen:
                    raise MeshError(
                        f"half-edge {he} used by faces {seen[he]} and {f}: "
                        "orientation is inconsistent or the edge is non-manifold")
                seen[he] = f
        for (i, j), f in seen.items():
            if (j, i) not in seen and not self.allow_boundary:
                raise MeshError(f"edge ({i}, {j}) of face {f} has only one incident face")
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.faces.ravel()] = True
        if not used.all():
            raise MeshError(f"isolated vertices: {np.flatnonzero(~used)[:5].tolist()}")
        if self.genus is not None and not self.allow_boundary:
            if self.euler_characteristic != 2 - 2 * self.genus:
                raise MeshError(
                    f"Euler characteristic {self.euler_characteristic} does not match "
                    f"genus {self.genus}")

    @cached_property
    def halfedge_face(self) -> dict:
        """Map ``(i, j) -> (face, k)`` for the directed edge ``i -> j``."""
        out = {}
        for f, tri in enumerate(self.faces):
            for k in range(3):
                out[(int(tri[k]), int(tri[(k + 1) % 3]))] = (f, k)
        return out

    @cached_property
    def edges(self) -> np.ndarray:
        """Undirected edges as ``(E, 2)`` with ascending vertex ids, sorted."""
        e = np.sort(np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                                    self.faces[:, [2, 0]]]), axis=1)
        e = np.unique(e, axis=0)
        e.setflags(write=False)
        return e

    @cached_property
    def edge_index(self) -> dict:
        return {(int(a), int(b)): n for n, (a, b) in enumerate(self.edges)}

    @cached_property
    def face_edges(self) -> np.ndarray:
        """Index of directed edge ``k`` of every face into :attr:`edges`."""
        idx = self.edge_index
        fe = np.empty_like(self.faces)
        for f, tri in enumerate(self.faces):
            for k in range(3):
                a, b = int(tri[k]), int(tri[(k + 1) % 3])
                fe[f, k] = idx[(a, b) if a < b else (b, a)]
        fe.setflags(write=False)
        return fe

    @cached_property
    def edge_faces(self) -> np.ndarray:
        """``(E, 2)`` faces on the two sides of each edge; -1 on a boundary.

        Column 0 holds the face containing the edge as ``lo -> hi``.
        """
        out = -np.ones((len(self.edges), 2), dtype=np.int64)
        for n, (a, b) in enumerate(self.edges):
            out[n, 0] = self.halfedge_face.get((int(a), int(b)), (-1,))[0]
            out[n, 1] = self.halfedge_face.get((int(b), int(a)), (-1,))[0]
        return out

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero((self.edge_faces < 0).any(axis=1))

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edges].ravel())

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def vertex_ring(self, v: int) -> list[tuple[int, int]]:
        """Corners ``(face, k)`` around vertex ``v`` in counter-clockwise order.

        For a boundary vertex the ring starts at the face whose clockwise
        neighbour is missing.
        """
        he = self.halfedge_face
        corners = self._corners_of_vertex[v]
        if not corners:
            return []
        # Walk clockwise to a boundary (or all the way round) to find the start.
        f, k = corners[0]
        first = (f, k)
        for _ in range(len(corners) + 1):
            tri = self.faces[f]
            a = int(tri[(k + 1) % 3])
            prev = he.get((a, v))
            if prev is None:
                break
            f, k = prev[0], (prev[1] + 1) % 3
            if (f, k) == first:
                break
        start = (f, k)
        ring = [start]
        while True:
            tri = self.faces[f]
            b = int(tri[(k + 2) % 3])
            nxt = he.get((v, b))
            if nxt is None or nxt == start:
                break
            f, k = nxt
            ring.append((f, k))
            if len(ring) > len(corners):
                raise MeshError(f"vertex {v} has a non-manifold neighbourhood")
        if len(ring) != len(corners):
            raise MeshError(f"vertex {v} has a non-manifold neighbourhood")
        return ring

    @cached_property
    def _corners_of_vertex(self) -> list[list[tuple[int, int]]]:
        out = [[] for _ in range(self.n_vertices)]
        for f, tri in enumerate(self.faces):
            for k in range(3):
                out[int(tri[k])].append((f, k))
        return out

    @cached_property
    def _faces_of_vertex(self) -> list[list[int]]:
        return [[f for f, _ in c] for c in self._corners_of_vertex]

    @cached_property
    def rings(self) -> list[list[tuple[int, int]]]:
        return [self.vertex_ring(v) for v in range(self.n_vertices)]


@dataclass(frozen=True, eq=False)
class DiscreteMetric:
    """Per-edge lengths aligned with ``mesh.edges``."""

    lengths: np.ndarray

    def __post_init__(self):
        lengths = np.array(self.lengths, dtype=np.float64)
        lengths.setflags(write=False)
        object.__setattr__(self, "lengths", lengths)

    def face_lengths(self, mesh: Mesh) -> np.ndarray:
        """``(F, 3)`` length of directed edge ``k`` of every face."""
        return self.lengths[mesh.face_edges]

    def validate(self, mesh: Mesh) -> None:
        if self.lengths.shape != (mesh.n_edges,):
            raise MetricError(
                f"expected {mesh.n_edges} edge lengths, got {self.lengths.shape}")
        if not np.all(np.isfinite(self.lengths)) or np.any(self.lengths <= 0):
            raise MetricError("edge lengths must be finite and positive")
        L = self.face_lengths(mesh)
        slack = L.sum(axis=1, keepdims=True) - 2 * L
        bad = np.flatnonzero((slack <= 0).any(axis=1))
        if bad.size:
            f = int(bad[0])
            raise MetricError(
                f"triangle inequality violated in face {f} "
                f"{mesh.faces[f].tolist()} with lengths {L[f].tolist()}", face=f)

    def scaled(self, factor: float) -> "DiscreteMetric":
        return DiscreteMetric(self.lengths * factor)


# -- per-face geometry -------------------------------------------------------

def _lengths(mesh, metric):
    metric.validate(mesh)
    return metric.face_lengths(mesh)


def face_areas(mesh: Mesh, metric: DiscreteMetric) -> np.ndarray:
    L = _lengths(mesh, metric)
    # Kahan's stable Heron formula
    s = np.sort(L, axis=1)[:, ::-1]
    a, b, c = s[:, 0], s[:, 1], s[:, 2]
    prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.maximum(prod, 0.0))


def corner_angles(mesh: Mesh, metric: DiscreteMetric) -> np.ndarray:
    """``(F, 3)`` interior angle at corner ``k`` of every face."""
    L = _lengths(mesh, metric)
    A = face_areas(mesh, metric)
    out = np.empty_like(L)
    for k in range(3):
        a = L[:, (k + 1) % 3]          # opposite edge
        b, c = L[:, k], L[:, (k + 2) % 3]
        out[:, k] = np.arctan2(4.0 * A, b * b + c * c - a * a)
    return out


def cotangents(mesh: Mesh, metric: DiscreteMetric) -> np.ndarray:
    """``(F, 3)`` cotangent of the corner angle at ``k``."""
    L = _lengths(mesh, metric)
    A = face_areas(mesh, metric)
    out = np.empty_like(L)
    for k in range(3):
        a = L[:, (k + 1) % 3]
        b, c = L[:, k], L[:, (k + 2) % 3]
        out[:, k] = (b * b + c * c - a * a) / (4.0 * A)
    return out


def face_frames(mesh: Mesh, metric: DiscreteMetric) -> np.ndarray:
    """``(F, 3, 2)`` corner positions in the face-local frame."""
    L = _lengths(mesh, metric)
    ang = corner_angles(mesh, metric)
    P = np.zeros((mesh.n_faces, 3, 2))
    P[:, 1, 0] = L[:, 0]
    P[:, 2, 0] = L[:, 2] * np.cos(ang[:, 0])
    P[:, 2, 1] = L[:, 2] * np.sin(ang[:, 0])
    return P


def dual_areas(mesh: Mesh, metric: DiscreteMetric) -> np.ndarray:
    """Barycentric dual area of every vertex (one third of incident faces)."""
    A = face_areas(mesh, metric)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.faces.ravel(), np.repeat(A / 3.0, 3))
    return out


def angle_sums(mesh: Mesh, metric: DiscreteMetric) -> np.ndarray:
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.faces.ravel(), corner_angles(mesh, metric).ravel())
    return out


def angle_defect_curvature(mesh: Mesh, metric: DiscreteMetric) -> ScalarField:
    """Vertex-integrated Gaussian curvature ``2*pi - sum of corner angles``.

    Boundary vertices use ``pi`` instead of ``2*pi`` (geodesic curvature is
    not included), so the discrete Gauss-Bonnet theorem only holds exactly on
    closed meshes.
    """
    full = np.full(mesh.n_vertices, 2.0 * np.pi)
    if mesh.allow_boundary:
        full[mesh.boundary_vertices] = np.pi
    return full - angle_sums(mesh, metric)


def pointwise_curvature(mesh: Mesh, metric: DiscreteMetric) -> ScalarField:
    return angle_defect_curvature(mesh, metric) / dual_areas(mesh, metric)


def cotan_laplacian(mesh: Mesh, metric: DiscreteMetric) -> sp.csr_matrix:
    """Integrated cotangent Laplacian, symmetric and non-positive.

    ``(L u)_i = sum_j w_ij (u_j - u_i)`` with ``w_ij = (cot a + cot b) / 2``;
    divide by :func:`dual_areas` for pointwise values.
    """
    cot = cotangents(mesh, metric)
    F = mesh.faces
    rows, cols, vals = [], [], []
    for k in range(3):
        # corner k is opposite edge (k+1, k+2)
        i, j = F[:, (k + 1) % 3], F[:, (k + 2) % 3]
        w = 0.5 * cot[:, k]
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [w, w, -w, -w]
    n = mesh.n_vertices
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    L.sum_duplicates()
    return L


def mass_matrix(mesh: Mesh, metric: DiscreteMetric) -> sp.dia_matrix:
    return sp.diags(dual_areas(mesh, metric))


def integrate(mesh: Mesh, metric: DiscreteMetric, field) -> float:
    """Integral of a per-vertex (lumped mass) or per-face field.

    Per-face arrays are integrated exactly as piecewise constants.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim == 0:
        return float(field) * float(face_areas(mesh, metric).sum())
    if field.shape == (mesh.n_faces,) and mesh.n_faces != mesh.n_vertices:
        return float(face_areas(mesh, metric) @ field)
    if field.shape != (mesh.n_vertices,):
        raise ValueError(f"field of shape {field.shape} matches neither vertices nor faces")
    return float(dual_areas(mesh, metric) @ field)


def total_area(mesh: Mesh, metric: DiscreteMetric) -> float:
    return float(face_areas(mesh, metric).sum())


# -- I/O -----------------------------------------------------------------------

def _edge_key(a, b):
    a, b = (a, b) if a < b else (b, a)
    return f"{a}-{b}"


def mesh_to_dict(mesh: Mesh, metric: DiscreteMetric) -> dict:
    ids = mesh.vertex_ids
    return {
        "genus": mesh.genus,
        "vertices": list(ids),
        "faces": [[ids[int(v)] for v in tri] for tri in mesh.faces],
        "edge_lengths": {_edge_key(ids[int(a)], ids[int(b)]): float(l)
                         for (a, b), l in zip(mesh.edges, metric.lengths)},
    }


def mesh_from_dict(data: dict, allow_boundary: bool = False) -> tuple[Mesh, DiscreteMetric]:
    ids = [int(v) for v in data["vertices"]]
    index = {v: n for n, v in enumerate(ids)}
    faces = np.array([[index[int(v)] for v in tri] for tri in data["faces"]], dtype=np.int64)
    mesh = Mesh(faces, len(ids), genus=data.get("genus"),
                allow_boundary=allow_boundary or bool(data.get("boundary", False)),
                vertex_ids=tuple(ids))
    lengths = np.empty(mesh.n_edges)
    given = data["edge_lengths"]
    for n, (a, b) in enumerate(mesh.edges):
        key = _edge_key(ids[int(a)], ids[int(b)])
        if key not in given:
            raise MeshError(f"missing edge length for {key}")
        lengths[n] = float(given[key])
    metric = DiscreteMetric(lengths)
    metric.validate(mesh)
    return mesh, metric


def save_mesh(path, mesh: Mesh, metric: DiscreteMetric) -> None:
    from .io import write_json
    data = mesh_to_dict(mesh, metric)
    if mesh.allow_boundary:
        data["boundary"] = True
    write_json(path, data)


def load_mesh(path) -> tuple[Mesh, DiscreteMetric]:
    return mesh_from_dict(json.loads(Path(path).read_text()))
