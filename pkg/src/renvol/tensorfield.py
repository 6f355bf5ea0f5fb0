"""Symmetric tensor fields, the Codazzi operator and quadratic differentials.

Per-face tensors are ``(F, 2, 2)`` arrays expressed in the face-local frame
of :func:`renvol.mesh.face_frames` (origin at the first corner, x-axis along
the first directed edge). That frame is orthonormal for the mesh metric, so
self-adjoint shape operators are plain symmetric matrices.

The Codazzi operator is discretized with quadratic (P2) Lagrange elements.
Unknowns live at vertices and edge midpoints, each node carrying its own
frame:

* a vertex frame is fixed by spreading the corner angles around the vertex
  uniformly over ``2*pi`` and starting at the outgoing edge of its first ring
  corner;
* an edge-midpoint frame points from the lower to the higher vertex id, which
  is exact parallel transport between the two faces unfolded across the edge.

Transporting a node value into a face frame rotates its traceless part by
twice the frame angle and leaves the trace alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import (DiscreteMetric, Mesh, corner_angles, dual_areas, face_areas,
                   face_frames)

GAP_RATIO_MIN = 10.0
N_PROBE = 20

# barycentric coordinates of the three edge midpoints; the rule is exact for
# quadratics, so integrating the squared (linear) Codazzi vector is exact
_QUAD_POINTS = ((0.5, 0.5, 0.0), (0.0, 0.5, 0.5), (0.5, 0.0, 0.5))


class DegenerateKernelError(RuntimeError):
    """No clear spectral gap separating the numerical kernel."""

    def __init__(self, message, singular_values):
        super().__init__(message)
        self.singular_values = np.asarray(singular_values)


# -- plain tensor helpers ------------------------------------------------------------

def sym_from_abc(abc) -> np.ndarray:
    abc = np.asarray(abc, dtype=np.float64)
    out = np.empty(abc.shape[:-1] + (2, 2))
    out[..., 0, 0] = abc[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = abc[..., 1]
    out[..., 1, 1] = abc[..., 2]
    return out


def abc_from_sym(S) -> np.ndarray:
    S = np.asarray(S)
    return np.stack([S[..., 0, 0], 0.5 * (S[..., 0, 1] + S[..., 1, 0]), S[..., 1, 1]], -1)


def identity_field(n_faces: int, scale: float = 1.0) -> np.ndarray:
    return np.broadcast_to(scale * np.eye(2), (n_faces, 2, 2)).copy()


def traceless_part(S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    tr = 0.5 * (S[..., 0, 0] + S[..., 1, 1])
    out = S.copy()
    out[..., 0, 0] -= tr
    out[..., 1, 1] -= tr
    return out


def self_adjointness_residual(I, B) -> np.ndarray:
    """Per-face ``|I B - (I B)^T|`` (zero when ``B`` is ``I``-self-adjoint)."""
    IB = np.asarray(I) @ np.asarray(B)
    return np.abs(IB[..., 0, 1] - IB[..., 1, 0])


def field_norm(mesh: Mesh, metric: DiscreteMetric, S) -> float:
    """Area-weighted L2 norm with the Frobenius norm pointwise."""
    A = face_areas(mesh, metric)
    return float(np.sqrt(np.sum(A * np.sum(np.asarray(S) ** 2, axis=(-2, -1)))))


# -- frames and transport -------------------------------------------------------

def vertex_frame_angles(mesh: Mesh, metric: DiscreteMetric) -> np.ndarray:
    """``(F, 3)`` angle of each corner's vertex frame x-axis in the face frame."""
    P = face_frames(mesh, metric)
    ang = corner_angles(mesh, metric)
    rho = np.zeros((mesh.n_faces, 3))
    for ring in mesh.rings:
        f = np.array([c[0] for c in ring])
        k = np.array([c[1] for c in ring])
        a = ang[f, k]
        cum = np.concatenate([[0.0], np.cumsum(a[:-1])]) * (2.0 * np.pi / a.sum())
        d = P[f, (k + 1) % 3] - P[f, k]
        rho[f, k] = np.arctan2(d[:, 1], d[:, 0]) - cum
    return rho


def edge_frame_angles(mesh: Mesh, metric: DiscreteMetric) -> np.ndarray:
    """``(F, 3)`` angle of each edge-midpoint frame in the face frame."""
    P = face_frames(mesh, metric)
    F = mesh.faces
    rho = np.empty((mesh.n_faces, 3))
    for k in range(3):
        d = P[:, (k + 1) % 3] - P[:, k]
        rho[:, k] = np.arctan2(d[:, 1], d[:, 0]) + np.pi * (F[:, k] > F[:, (k + 1) % 3])
    return rho


@dataclass(frozen=True, eq=False)
class P2Layout:
    """Node numbering and frame angles for the quadratic element space."""

    nodes: np.ndarray      # (F, 6): three vertices then edges 0, 1, 2
    rho: np.ndarray        # (F, 6) node-frame angles in the face frame
    n_nodes: int
    weights: np.ndarray    # lumped node areas


def p2_layout(mesh: Mesh, metric: DiscreteMetric) -> P2Layout:
    n = mesh.n_vertices
    nodes = np.concatenate([mesh.faces, n + mesh.face_edges], axis=1)
    rho = np.concatenate([vertex_frame_angles(mesh, metric),
                          edge_frame_angles(mesh, metric)], axis=1)
    A = face_areas(mesh, metric)
    w_edge = np.zeros(mesh.n_edges)
    np.add.at(w_edge, mesh.face_edges.ravel(), np.repeat(A / 3.0, 3))
    weights = np.concatenate([dual_areas(mesh, metric), w_edge])
    return P2Layout(nodes, rho, n + mesh.n_edges, weights)


def _to_face(rho):
    """Linear maps node ``(p, s, t)`` -> face ``P, S, T`` for frame angle ``rho``."""
    c, s2 = np.cos(2 * rho), np.sin(2 * rho)
    dP = np.stack([0.5 + 0.5 * c, -s2, 0.5 - 0.5 * c], -1)
    dS = np.stack([0.5 * s2, c, -0.5 * s2], -1)
    dT = np.stack([0.5 - 0.5 * c, s2, 0.5 + 0.5 * c], -1)
    return dP, dS, dT


def _rotate(abc, rho):
    """Carry ``(p, s, t)`` from a frame at angle ``rho`` into the face frame.

    Returns ``(trace/2, m, n)`` with the traceless part rotated by ``2 rho``.
    Trace and traceless parts are handled separately so that multiples of
    the identity are reproduced bit for bit.
    """
    tau = 0.5 * (abc[..., 0] + abc[..., 2])
    m = 0.5 * (abc[..., 0] - abc[..., 2])
    nn = abc[..., 1]
    c, s2 = np.cos(2 * rho), np.sin(2 * rho)
    m2 = c * m - s2 * nn
    n2 = s2 * m + c * nn
    return tau, m2, n2


def _basis_gradients(P, A):
    """Gradients ``(F, 3, 2)`` of the barycentric coordinates."""
    G = np.empty((P.shape[0], 3, 2))
    for k in range(3):
        g = P[:, (k + 2) % 3] - P[:, (k + 1) % 3]
        G[:, k, 0] = -g[:, 1] / (2 * A)
        G[:, k, 1] = g[:, 0] / (2 * A)
    return G


def _p2_gradients(G, lam):
    """Gradients ``(F, 6, 2)`` of the six P2 shape functions at ``lam``."""
    out = np.empty((G.shape[0], 6, 2))
    for k in range(3):
        kk = (k + 1) % 3
        out[:, k] = (4 * lam[k] - 1) * G[:, k]
        out[:, 3 + k] = 4 * (lam[k] * G[:, kk] + lam[kk] * G[:, k])
    return out


# -- Codazzi operator -----------------------------------------------------------

def codazzi_operator(mesh: Mesh, metric: DiscreteMetric, trace: bool = True,
                     layout: P2Layout | None = None):
    """Assemble the least-squares ``[Codazzi; trace]`` operator on P2 nodes.

    Rows are the two components of ``d^nabla B`` at the edge-midpoint
    quadrature points, weighted by ``sqrt(area / 3)``, followed (when
    ``trace``) by ``sqrt(node weight) * p`` and ``sqrt(node weight) * t``
    penalty rows. Returns ``(operator, mass, layout)`` where ``mass`` is the
    lumped L2 mass on node unknowns ``(p, s, t)``.
    """
    layout = layout or p2_layout(mesh, metric)
    P = face_frames(mesh, metric)
    A = face_areas(mesh, metric)
    G = _basis_gradients(P, A)
    nF = mesh.n_faces
    dP, dS, dT = _to_face(layout.rho)
    w = np.sqrt(A / 3.0)
    rows, cols, vals = [], [], []
    base = 0
    face_rows = np.arange(nF)
    for lam in _QUAD_POINTS:
        grads = _p2_gradients(G, lam)
        gx, gy = grads[..., 0], grads[..., 1]
        for j in range(6):
            for comp in range(3):
                col = 3 * layout.nodes[:, j] + comp
                rows += [base + 2 * face_rows, base + 2 * face_rows + 1]
                cols += [col, col]
                vals += [w * (gx[:, j] * dS[:, j, comp] - gy[:, j] * dP[:, j, comp]),
                         w * (gx[:, j] * dT[:, j, comp] - gy[:, j] * dS[:, j, comp])]
        base += 2 * nF
    nn = layout.n_nodes
    if trace:
        sw = np.sqrt(layout.weights)
        for comp in (0, 2):
            rows.append(base + np.arange(nn))
            cols.append(3 * np.arange(nn) + comp)
            vals.append(sw)
        base += nn
    op = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(base, 3 * nn)).tocsr()
    mass = sp.diags(np.repeat(layout.weights, 3) * np.tile([1.0, 2.0, 1.0], nn))
    return op, mass, layout


def nodes_to_faces(layout: P2Layout, nodal) -> np.ndarray:
    """Evaluate a nodal P2 field at face centroids, returned as ``(F, 2, 2)``."""
    nodal = np.asarray(nodal).reshape(-1, 3)
    tau, m, n = _rotate(nodal[layout.nodes], layout.rho)
    # centroid weights: -1/9 at vertices, 4/9 at edge midpoints
    wts = np.array([-1.0, -1.0, -1.0, 4.0, 4.0, 4.0]) / 9.0
    tau, m, n = (x @ wts for x in (tau, m, n))
    return sym_from_abc(np.stack([tau + m, n, tau - m], -1))


def faces_to_nodes(mesh: Mesh, metric: DiscreteMetric, B, layout: P2Layout | None = None):
    """Lift a per-face field to P2 nodes by area-weighted transported averaging."""
    layout = layout or p2_layout(mesh, metric)
    B = np.asarray(B, dtype=np.float64)
    A = face_areas(mesh, metric)
    abc = abc_from_sym(B)
    nn = layout.n_nodes
    sums = np.zeros((nn, 3))
    wsum = np.zeros(nn)
    # reference trace per node keeps constant traces exact under averaging
    ref = np.full(nn, np.nan)
    tr_face = 0.5 * (abc[:, 0] + abc[:, 2])
    for j in range(6):
        idx = layout.nodes[:, j]
        unset = np.isnan(ref[idx])
        ref[idx[unset]] = tr_face[unset]
    for j in range(6):
        idx = layout.nodes[:, j]
        tau, m, n = _rotate(abc, -layout.rho[:, j])
        np.add.at(sums, idx, A[:, None] * np.stack([tau - ref[idx], m, n], -1))
        np.add.at(wsum, idx, A)
    mean = sums / wsum[:, None]
    tau = ref + mean[:, 0]
    return np.stack([tau + mean[:, 1], mean[:, 2], tau - mean[:, 1]], -1), layout


def codazzi_residual(mesh: Mesh, metric: DiscreteMetric, B, layout: P2Layout | None = None,
                     nodal=None) -> np.ndarray:
    """Per-edge Codazzi defect of a shape field.

    ``B`` (per-face, face frames) is lifted to P2 nodes unless ``nodal`` node
    values are given directly. In each face the Codazzi vector ``d^nabla B`` is
    integrated exactly in L2, and every edge reports the root mean square of
    its two faces. Gradients use differences against the face's first node,
    so any constant multiple of the identity yields exactly zero.
    """
    if nodal is None:
        nodal, layout = faces_to_nodes(mesh, metric, B, layout)
    layout = layout or p2_layout(mesh, metric)
    nodal = np.asarray(nodal).reshape(-1, 3)
    P = face_frames(mesh, metric)
    A = face_areas(mesh, metric)
    G = _basis_gradients(P, A)
    tau, m, n = _rotate(nodal[layout.nodes], layout.rho)
    Pc, Sc, Tc = tau + m, n, tau - m
    dPc = Pc - Pc[:, :1]
    dSc = Sc - Sc[:, :1]
    dTc = Tc - Tc[:, :1]
    sq = np.zeros(mesh.n_faces)
    for lam in _QUAD_POINTS:
        g = _p2_gradients(G, lam)
        gx, gy = g[..., 0], g[..., 1]
        c1 = np.sum(gx * dSc - gy * dPc, axis=1)
        c2 = np.sum(gx * dTc - gy * dSc, axis=1)
        sq += (A / 3.0) * (c1 * c1 + c2 * c2)
    ef = mesh.edge_faces
    return np.sqrt(0.5 * (sq[ef[:, 0]] + sq[ef[:, 1]]))


# -- kernel extraction ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CodazziBasis:
    fields: np.ndarray            # (k, F, 2, 2) traceless, face frames
    nodal: np.ndarray             # (k, n_nodes, 3)
    singular_values: np.ndarray   # the probed smallest singular values
    dimension: int
    gap_ratio: float
    layout: P2Layout

    def __len__(self):
        return self.dimension


def smallest_singular_values(mesh: Mesh, metric: DiscreteMetric, n_probe: int = N_PROBE,
                             trace: bool = True, vectors: bool = False):
    """Smallest mass-normalized singular values of the Codazzi operator.

    Shift-invert on the normal operator with a fixed start vector, so the
    result is reproducible.
    """
    op, mass, layout = codazzi_operator(mesh, metric, trace=trace)
    N = (op.T @ op).tocsc()
    v0 = np.ones(N.shape[0])
    ev, vec = spla.eigsh(N, k=n_probe, M=mass.tocsc(), sigma=-1e-8, which="LM", v0=v0)
    order = np.argsort(ev)
    sv = np.sqrt(np.abs(ev[order]))
    if vectors:
        return sv, vec[:, order], layout
    return sv


def spectral_gap(sv) -> tuple[int, float]:
    """Index and ratio of the largest consecutive jump in ``sv``."""
    sv = np.asarray(sv)
    ratios = sv[1:] / np.maximum(sv[:-1], np.finfo(float).tiny)
    i = int(np.argmax(ratios))
    return i + 1, float(ratios[i])


def codazzi_basis(mesh: Mesh, metric: DiscreteMetric, n_probe: int = N_PROBE,
                  min_ratio: float = GAP_RATIO_MIN) -> CodazziBasis:
    """Numerical basis of traceless Codazzi tensors (holomorphic quadratic differentials).

    The dimension is the position of the largest spectral jump among the
    ``n_probe`` smallest singular values. Raises DegenerateKernelError when that
    jump is below ``min_ratio``. Basis vectors are mass-orthonormal, with the
    sign fixed so that the largest nodal component is positive; the per-face
    fields are centroid values with the residual trace removed.
    """
    sv, vec, layout = smallest_singular_values(mesh, metric, n_probe, vectors=True)
    dim, ratio = spectral_gap(sv)
    if ratio < min_ratio:
        raise DegenerateKernelError(
            f"no spectral gap: largest ratio {ratio:.3g} < {min_ratio:g} at index {dim}", sv)
    vec = vec[:, :dim].T.copy()
    for i in range(dim):
        j = int(np.argmax(np.abs(vec[i])))
        if vec[i, j] < 0:
            vec[i] = -vec[i]
    nodal = vec.reshape(dim, layout.n_nodes, 3)
    fields = np.stack([traceless_part(nodes_to_faces(layout, x)) for x in nodal])
    return CodazziBasis(fields, nodal, sv, dim, ratio, layout)


# -- quadratic differentials ----------------------------------------------------

def quad_from_traceless(T) -> np.ndarray:
    """``q`` with ``T = -Re(q)`` for a traceless tensor in an orthonormal frame.

    ``Re((x + iy)(dx + i dy)^2)`` has matrix ``[[x, -y], [-y, -x]]``, so
    ``q = -T_00 + i T_01``.
    """
    T = np.asarray(T)
    return -T[..., 0, 0] + 1j * T[..., 0, 1]


def traceless_from_quad(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.complex128)
    return sym_from_abc(np.stack([-q.real, q.imag, q.real], -1))


def qd_norms(mesh: Mesh, hyperbolic_metric: DiscreteMetric, q) -> dict:
    """Sup and L2 norms of a per-face quadratic differential.

    Face frames are orthonormal for the hyperbolic metric, so the conformal
    density is 1 and the pointwise norm is ``|q|``.
    """
    q = np.asarray(q, dtype=np.complex128)
    A = face_areas(mesh, hyperbolic_metric)
    mag = np.abs(q)
    return {"linf": float(mag.max()) if mag.size else 0.0,
            "l2": float(np.sqrt(np.sum(A * mag * mag)))}


# -- file formats -------------------------------------------------------------

def tensor_to_dict(S, face_ids=None) -> dict:
    abc = abc_from_sym(S)
    ids = range(len(abc)) if face_ids is None else face_ids
    return {str(i): [float(x) for x in row] for i, row in zip(ids, abc)}


def tensor_from_dict(data: dict, n_faces: int) -> np.ndarray:
    if set(data) != {str(i) for i in range(n_faces)}:
        raise ValueError(f"tensor field must list faces 0..{n_faces - 1}")
    return sym_from_abc(np.array([data[str(i)] for i in range(n_faces)], dtype=np.float64))


def quad_to_dict(q) -> dict:
    return {str(i): [float(z.real), float(z.imag)] for i, z in enumerate(np.asarray(q))}


def quad_from_dict(data: dict, n_faces: int) -> np.ndarray:
    if set(data) != {str(i) for i in range(n_faces)}:
        raise ValueError(f"quadratic differential must list faces 0..{n_faces - 1}")
    arr = np.array([data[str(i)] for i in range(n_faces)], dtype=np.float64)
    return arr[:, 0] + 1j * arr[:, 1]
