"""Hyperbolic ends from data at infinity and the W-functional along them.

An end is encoded by a metric ``I*`` and a shape operator ``B*`` on the
surface at infinity. Its equidistant leaves are

    I_r  = 1/2 (e^{2r} I* + 2 II* + e^{-2r} III*) = 1/2 I* (e^r + e^{-r} B*)^2
    II_r = 1/2 d/dr I_r = 1/2 (e^{2r} I* - e^{-2r} I* B*^2)
    B_r  = (e^r + e^{-r} B*)^{-1} (e^r - e^{-r} B*),   H_r = tr B_r

with ``II* = I* B*`` and ``III* = I* B*^2``. The factor 1/2 makes the Gauss
equation ``tr B* = -K*`` hold for Fuchsian data ``I* = m/2``, ``B* = id``.

Per face, with ``s = sqrt(det I*) * area``, ``T = tr B*`` and ``D = det B*``,
the leaf area element is ``s/2 (e^{2r} + T + e^{-2r} D)`` and
``H da = s (e^{2r} - e^{-2r} D)``. The W-increment between two leaves
therefore has slope ``1/2 * integral of tr B* da*``, which equals
``-pi * chi`` by the Gauss equation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .mesh import DiscreteMetric, Mesh, face_areas, face_frames
from .tensorfield import (codazzi_residual, faces_to_nodes, field_norm, p2_layout,
                          self_adjointness_residual, tensor_to_dict)

logger = logging.getLogger(__name__)

GAUSS_TOL = 1e-6
CODAZZI_TOL = 5e-2
CONVEXITY_EPS = 1e-3
QUAD_TOL = 1e-10

CONVENTIONS = {
    "metric_form": "I_r = (1/2)(e^{2r} I* + 2 II* + e^{-2r} III*), so I* = lim 2 e^{-2r} I_r",
    "mean_curvature": "H = tr B (sum of principal curvatures)",
    "laplacian_sign": "cotan Laplacian is div grad (non-positive operator); "
                      "curvature formula uses Delta = -div grad",
    "w_functional": "W(N) = V(N) - (1/4) integral of H da",
    "pairing": "<A, B> = tr(I^{-1} A I^{-1} B), area element of I",
}


class DataError(ValueError):
    """Data at infinity violates a constraint."""


class NonConvexLeafError(ValueError):
    def __init__(self, message, face):
        super().__init__(message)
        self.face = face


class QuadratureError(RuntimeError):
    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


# -- curvature of a per-face metric ------------------------------------------------

def _face_gram(mesh, metric, I):
    """Squared ``I``-lengths of the three directed edges of each face."""
    P = face_frames(mesh, metric)
    out = np.empty((mesh.n_faces, 3))
    for k in range(3):
        e = P[:, (k + 1) % 3] - P[:, k]
        out[:, k] = np.einsum("fi,fij,fj->f", e, I, e)
    return out


def tensor_corner_angles(mesh: Mesh, metric: DiscreteMetric, I) -> np.ndarray:
    """Corner angles ``(F, 3)`` of each face measured with the tensor ``I``."""
    sq = _face_gram(mesh, metric, I)
    L = np.sqrt(sq)
    ang = np.empty_like(L)
    for k in range(3):
        # corner k sits between edges k (outgoing) and k+2 (incoming)
        b, c, a = L[:, k], L[:, (k + 2) % 3], sq[:, (k + 1) % 3]
        ang[:, k] = np.arccos(np.clip((b * b + c * c - a) / (2 * b * c), -1.0, 1.0))
    return ang


def tensor_area_weights(mesh: Mesh, metric: DiscreteMetric, I) -> np.ndarray:
    """Per-face area of the tensor metric ``I``."""
    return np.sqrt(np.linalg.det(I)) * face_areas(mesh, metric)


def tensor_curvature(mesh: Mesh, metric: DiscreteMetric, I) -> tuple[np.ndarray, np.ndarray]:
    """Curvature of ``I`` per vertex and per face.

    Vertex values are angle defects divided by one third of the incident
    ``I``-areas; face values average their three vertices, so the integral
    over faces reproduces ``2 pi chi`` exactly.
    """
    ang = tensor_corner_angles(mesh, metric, I)
    s = tensor_area_weights(mesh, metric, I)
    F = mesh.faces
    defect = np.full(mesh.n_vertices, 2 * np.pi)
    np.subtract.at(defect, F.ravel(), ang.ravel())
    Av = np.zeros(mesh.n_vertices)
    np.add.at(Av, F.ravel(), np.repeat(s / 3.0, 3))
    Kv = defect / Av
    return Kv, Kv[F].mean(axis=1)


# -- data at infinity --------------------------------------------------------------

def _eig_self_adjoint(I, B):
    """Eigenvalues ``(F, 2)`` of ``I``-self-adjoint ``B`` (ascending)."""
    Lc = np.linalg.cholesky(I)
    S = np.swapaxes(Lc, -1, -2) @ B @ np.linalg.inv(np.swapaxes(Lc, -1, -2))
    return np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))


@dataclass(frozen=True, eq=False)
class DataAtInfinity:
    """Validated pair ``(I*, B*)`` on a mesh.

    ``I_star`` and ``B_star`` are ``(F, 2, 2)`` arrays in the face frames of
    ``metric``. ``B_nodal`` optionally carries the traceless part of ``B*`` as
    P2 node values, used for the Codazzi residual instead of re-lifting the
    centroid samples.
    """

    mesh: Mesh
    metric: DiscreteMetric
    I_star: np.ndarray
    B_star: np.ndarray
    B_nodal: np.ndarray | None = None
    gauss_tol: float = GAUSS_TOL
    codazzi_tol: float = CODAZZI_TOL
    convexity_eps: float = CONVEXITY_EPS
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        nF = self.mesh.n_faces
        for name in ("I_star", "B_star"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (nF, 2, 2):
                raise DataError(f"{name} must have shape ({nF}, 2, 2)")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        I = self.I_star
        if np.max(np.abs(I[:, 0, 1] - I[:, 1, 0])) > 0:
            raise DataError("I_star must be symmetric")
        bad = np.flatnonzero((I[:, 0, 0] <= 0) | (np.linalg.det(I) <= 0))
        if bad.size:
            raise DataError(f"I_star is not positive definite on face {int(bad[0])}")
        scale = np.abs(I @ self.B_star).max()
        sa = self_adjointness_residual(I, self.B_star)
        if sa.max() > 1e-12 * max(1.0, scale):
            raise DataError(f"B_star is not I_star-self-adjoint on face {int(np.argmax(sa))}")

    # derived tensors
    @property
    def II_star(self) -> np.ndarray:
        II = self.I_star @ self.B_star
        return 0.5 * (II + np.swapaxes(II, -1, -2))

    @property
    def III_star(self) -> np.ndarray:
        III = np.swapaxes(self.B_star, -1, -2) @ self.I_star @ self.B_star
        return 0.5 * (III + np.swapaxes(III, -1, -2))

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def K_star(self) -> np.ndarray:
        """Per-face curvature of ``I*``."""
        return self._get("K", lambda: tensor_curvature(self.mesh, self.metric, self.I_star)[1])

    @property
    def area_weights(self) -> np.ndarray:
        """Per-face ``I*``-areas ``s_f``."""
        return self._get("s", lambda: tensor_area_weights(self.mesh, self.metric, self.I_star))

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._get("eig", lambda: _eig_self_adjoint(self.I_star, self.B_star))

    def gauss_residual(self) -> np.ndarray:
        """Per-face ``|tr B* + K*|`` relative to the mean curvature scale.

        The scale is ``2 pi |chi| / area(I*)``, which makes the residual
        invariant under rescaling at infinity.
        """
        chi = self.mesh.euler_characteristic
        tr = self.B_star[:, 0, 0] + self.B_star[:, 1, 1]
        ref = 2 * np.pi * abs(chi) / self.area_weights.sum() if chi else 1.0
        return np.abs(tr + self.K_star) / ref

    def codazzi_residual(self) -> float:
        """Relative L2 Codazzi defect of ``B*`` for the mesh connection."""
        def compute():
            layout = p2_layout(self.mesh, self.metric)
            B = self.B_star
            if self.B_nodal is None:
                nodal, _ = faces_to_nodes(self.mesh, self.metric, B, layout)
            else:
                tr = 0.5 * (B[:, 0, 0] + B[:, 1, 1])
                trace_part = tr[:, None, None] * np.eye(2)
                nodal, _ = faces_to_nodes(self.mesh, self.metric, trace_part, layout)
                nodal = nodal + np.asarray(self.B_nodal).reshape(-1, 3)
            res = codazzi_residual(self.mesh, self.metric, None, layout=layout, nodal=nodal)
            norm = field_norm(self.mesh, self.metric, B)
            # each face contributes to three edges, each edge averages two faces
            total = math.sqrt(float(np.sum(res * res)) / 1.5)
            return total / norm if norm > 0 else total
        return self._get("codazzi", compute)

    def horizon(self) -> float:
        """Smallest ``r0`` with ``e^r + e^{-r} lambda >= eps`` for all ``r >= r0``.

        Returns ``-inf`` when every leaf is convex.
        """
        lam = self.eigenvalues.ravel()
        eps = self.convexity_eps
        disc = eps * eps - 4 * lam
        ok = disc >= 0
        if not np.any(ok):
            return -math.inf
        x = 0.5 * (eps + np.sqrt(disc[ok]))
        x = x[x > 0]
        return float(np.log(x).max()) if x.size else -math.inf

    def validate(self) -> dict:
        g = self.gauss_residual()
        c = self.codazzi_residual()
        report = {"gauss_residual": float(g.max()), "codazzi_residual": c,
                  "gauss_tol": self.gauss_tol, "codazzi_tol": self.codazzi_tol,
                  "horizon": _json_float(self.horizon())}
        if g.max() > self.gauss_tol:
            raise DataError(f"Gauss residual {g.max():.3e} exceeds {self.gauss_tol:g} "
                            f"on face {int(np.argmax(g))}")
        if c > self.codazzi_tol:
            raise DataError(f"Codazzi residual {c:.3e} exceeds {self.codazzi_tol:g}")
        return report

    def with_fields(self, I_star=None, B_star=None, B_nodal=...) -> "DataAtInfinity":
        return DataAtInfinity(self.mesh, self.metric,
                              self.I_star if I_star is None else I_star,
                              self.B_star if B_star is None else B_star,
                              self.B_nodal if B_nodal is ... else B_nodal,
                              self.gauss_tol, self.codazzi_tol, self.convexity_eps)


def _json_float(x):
    return None if not math.isfinite(x) else float(x)


def fuchsian_data(mesh: Mesh, hyperbolic_metric: DiscreteMetric, **kwargs) -> DataAtInfinity:
    """``I* = m/2`` and ``B* = id`` for a hyperbolic metric ``m``."""
    nF = mesh.n_faces
    I = np.broadcast_to(0.5 * np.eye(2), (nF, 2, 2)).copy()
    B = np.broadcast_to(np.eye(2), (nF, 2, 2)).copy()
    return DataAtInfinity(mesh, hyperbolic_metric, I, B, **kwargs)


def project_gauss(data: DataAtInfinity) -> tuple[DataAtInfinity, float]:
    """Shift ``B*`` by a multiple of the identity so that ``tr B* = -K*``.

    Returns the projected data and the largest per-face shift.
    """
    tr = data.B_star[:, 0, 0] + data.B_star[:, 1, 1]
    shift = 0.5 * (-data.K_star - tr)
    B = data.B_star + shift[:, None, None] * np.eye(2)
    return data.with_fields(B_star=B), float(np.abs(shift).max())


def perturbed_data(base: DataAtInfinity, basis, coeffs, eps: float) -> DataAtInfinity:
    """``B* + eps * sum c_i b_i`` for traceless Codazzi fields ``b_i``.

    ``basis`` is a :class:`renvol.tensorfield.CodazziBasis`; ``I*`` must be a
    constant multiple of the mesh metric so that the ``b_i`` stay
    self-adjoint and Codazzi. The Gauss equation is re-imposed afterwards.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    if c.shape != (basis.dimension,):
        raise ValueError(f"need {basis.dimension} coefficients")
    delta = eps * np.tensordot(c, basis.fields, axes=1)
    nodal = eps * np.tensordot(c, basis.nodal, axes=1)
    if base.B_nodal is not None:
        nodal = nodal + np.asarray(base.B_nodal).reshape(nodal.shape)
    out = base.with_fields(B_star=base.B_star + delta, B_nodal=nodal)
    return project_gauss(out)[0]


# -- leaves ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LeafGeometry:
    r: float
    I: np.ndarray
    II: np.ndarray
    B: np.ndarray
    H: np.ndarray
    area_element: np.ndarray   # per-face areas of the leaf

    @property
    def area(self) -> float:
        return float(self.area_element.sum())

    @property
    def H_integral(self) -> float:
        return float(np.dot(self.H, self.area_element))


def _check_convex(data, r):
    lam = data.eigenvalues
    val = np.exp(r) + np.exp(-r) * lam
    bad = np.flatnonzero(np.any(val < data.convexity_eps, axis=1))
    if bad.size:
        raise NonConvexLeafError(
            f"leaf r = {r:g} is below the convexity horizon on face {int(bad[0])}", int(bad[0]))


def leaf(data: DataAtInfinity, r: float) -> LeafGeometry:
    r = float(r)
    _check_convex(data, r)
    I, B = data.I_star, data.B_star
    ep, em = math.exp(r), math.exp(-r)
    C = ep * np.eye(2) + em * B
    Ir = 0.5 * (I @ C @ C)
    Ir = 0.5 * (Ir + np.swapaxes(Ir, -1, -2))
    IB2 = I @ B @ B
    IIr = 0.5 * (ep * ep * I - em * em * IB2)
    IIr = 0.5 * (IIr + np.swapaxes(IIr, -1, -2))
    Br = np.linalg.solve(Ir, IIr)
    H = Br[:, 0, 0] + Br[:, 1, 1]
    da = np.sqrt(np.linalg.det(Ir)) * face_areas(data.mesh, data.metric)
    return LeafGeometry(r, Ir, IIr, Br, H, da)


def leaf_area_coefficients(data: DataAtInfinity):
    """``(s, T, D)`` with leaf area ``sum s/2 (e^{2r} + T + e^{-2r} D)``."""
    B = data.B_star
    T = B[:, 0, 0] + B[:, 1, 1]
    D = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    return data.area_weights, T, D


def volume_between(data: DataAtInfinity, r0: float, r1: float, tol: float = QUAD_TOL) -> float:
    """``integral_{r0}^{r1} area(I_r) dr`` by per-face adaptive Simpson."""
    s, T, D = leaf_area_coefficients(data)
    lo, hi, sign = (r0, r1, 1.0) if r0 <= r1 else (r1, r0, -1.0)
    vals, err, ok = _accel.simpson_faces(s, T, D, float(lo), float(hi), float(tol))
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise QuadratureError(f"adaptive quadrature failed on face {bad} "
                              f"(achieved {err[bad]:.3e}, requested {tol:g})", float(err[bad]))
    return sign * float(np.sum(vals))


def relative_w(data: DataAtInfinity, r0: float, r1: float, tol: float = QUAD_TOL) -> float:
    """``W(S_r0, S_r1) = V - 1/4 int_{S_r1} H da + 1/4 int_{S_r0} H da``."""
    if r0 == r1:
        _check_convex(data, r0)
        return 0.0
    V = volume_between(data, r0, r1, tol)
    return V - 0.25 * leaf(data, r1).H_integral + 0.25 * leaf(data, r0).H_integral


def fuchsian_relative_w(area: float, r0: float, r1: float) -> float:
    """Closed form for Fuchsian data with hyperbolic area ``area``."""
    def V(r):
        return area * (0.5 * r + 0.25 * math.sinh(2 * r))

    def Hint(r):
        return area * math.sinh(2 * r)

    return V(r1) - V(r0) - 0.25 * (Hint(r1) - Hint(r0))


def slope_constants(chi: int) -> dict:
    return {"-pi*chi": -math.pi * chi, "-2pi*chi": -2 * math.pi * chi}


# -- sweeps ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FoliationSweep:
    radii: np.ndarray
    w_rel: np.ndarray
    areas: np.ndarray
    H_integrals: np.ndarray
    anchor: float
    slope: float
    intercept: float
    residual: float
    row_residuals: np.ndarray
    chi: int

    def slope_report(self) -> dict:
        cands = slope_constants(self.chi)
        diffs = {k: abs(self.slope - v) for k, v in cands.items()}
        return {"measured": self.slope, "candidates": cands,
                "differences": diffs, "matches": min(diffs, key=diffs.get)}

    def rows(self):
        return [(float(r), float(a), float(h), float(w), float(e)) for r, a, h, w, e in
                zip(self.radii, self.areas, self.H_integrals, self.w_rel, self.row_residuals)]

    HEADER = ("r", "area", "H_integral", "W_rel", "slope_fit_residual")

    def to_dict(self) -> dict:
        return {"anchor": self.anchor, "slope": self.slope, "intercept": self.intercept,
                "affinity_residual": self.residual, "slope_comparison": self.slope_report(),
                "rows": [dict(zip(self.HEADER, row)) for row in self.rows()],
                "conventions": CONVENTIONS}


def sweep(data: DataAtInfinity, radii, anchor: float | None = None,
          tol: float = QUAD_TOL) -> FoliationSweep:
    """W-relative values along the foliation, fitted by an affine function of r.

    Values are ``relative_w(data, anchor, r)`` (anchor defaults to the first
    radius). The intercept is the fit at ``r = 0``.
    """
    radii = np.asarray(sorted(float(r) for r in radii))
    if radii.size < 2:
        raise ValueError("sweep needs at least two radii")
    anchor = float(radii[0] if anchor is None else anchor)
    w = np.array([relative_w(data, anchor, r, tol) for r in radii])
    leaves = [leaf(data, r) for r in radii]
    areas = np.array([lf.area for lf in leaves])
    Hs = np.array([lf.H_integral for lf in leaves])
    X = np.stack([radii, np.ones_like(radii)], 1)
    (slope, intercept), *_ = np.linalg.lstsq(X, w, rcond=None)
    res = w - (slope * radii + intercept)
    return FoliationSweep(radii, w, areas, Hs, anchor, float(slope), float(intercept),
                          float(np.abs(res).max()), res, data.mesh.euler_characteristic)


def scale_at_infinity(data: DataAtInfinity, rho: float) -> DataAtInfinity:
    """``(e^{2 rho} I*, e^{-2 rho} B*)``: the same end reindexed by ``rho``."""
    f = math.exp(2 * rho)
    nodal = None if data.B_nodal is None else np.asarray(data.B_nodal) / f
    return data.with_fields(I_star=data.I_star * f, B_star=data.B_star / f, B_nodal=nodal)


def leaf_reindexing_defect(data: DataAtInfinity, rho: float, r: float) -> float:
    """Max relative per-face difference between ``leaf(scaled, r)`` and ``leaf(data, r + rho)``."""
    a = leaf(scale_at_infinity(data, rho), r)
    b = leaf(data, r + rho)
    out = 0.0
    for x, y in ((a.I, b.I), (a.II, b.II), (a.B, b.B)):
        scale = np.abs(y).max(axis=(1, 2))
        out = max(out, float((np.abs(x - y).max(axis=(1, 2)) / scale).max()))
    return max(out, float(np.abs(a.H - b.H).max() / np.abs(b.H).max()))


def nested_monotonicity_check(data: DataAtInfinity, r0: float, r1: float,
                              tol: float = 1e-9) -> dict:
    """``W(S_r0, S_r1) >= 0`` with equality exactly when ``r0 == r1``.

    Strictly nested leaves must give a strictly positive value; ``tol`` only
    bounds the equality case.
    """
    if r1 < r0:
        raise ValueError("need r0 <= r1")
    value = relative_w(data, r0, r1)
    equal = r0 == r1
    passed = abs(value) <= tol if equal else value > 0
    return {"r0": r0, "r1": r1, "value": value, "equality_case": equal, "passed": bool(passed)}


# -- files --------------------------------------------------------------------

def data_to_dicts(data: DataAtInfinity) -> tuple[dict, dict]:
    return tensor_to_dict(data.I_star), tensor_to_dict(data.II_star)


def data_from_fields(mesh, metric, I_star, II_star, tolerances=None) -> DataAtInfinity:
    I = np.asarray(I_star, dtype=np.float64)
    B = np.linalg.solve(I, np.asarray(II_star, dtype=np.float64))
    # exact I-self-adjointness: symmetrize I B
    IB = I @ B
    B = np.linalg.solve(I, 0.5 * (IB + np.swapaxes(IB, -1, -2)))
    tol = dict(tolerances or {})
    unknown = set(tol) - {"gauss_tol", "codazzi_tol", "convexity_eps"}
    if unknown:
        raise DataError(f"unknown tolerance keys: {sorted(unknown)}")
    return DataAtInfinity(mesh, metric, I, B, **tol)

