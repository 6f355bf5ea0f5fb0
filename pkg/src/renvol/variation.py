"""First-variation formulas for W, checked by finite differences.

A deformation is a path ``t -> (I*(t), B*(t))`` of data at infinity. Two
formulas are evaluated:

* at a leaf ``S_r``: ``W' = 1/4 int <II_r' - (H_r/2) I_r', I_r> da_r``;
* at infinity:      ``W' = -1/4 int <II*' - (H*/2) I*', I*> da*``,

with ``<A, B> = tr(I^{-1} A I^{-1} B)``. Leaf derivatives ``I_r'``,
``II_r'`` are central differences along the path. The W-increment between
an inner leaf and ``S_r`` is differentiated the same way and compared with
the difference of the two leaf formulas.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .end_geometry import (DataAtInfinity, leaf, project_gauss, relative_w,
                           scale_at_infinity, tensor_curvature)

DEFAULT_STEPS = (0.04, 0.02, 0.01, 0.005)
LEAF_STEP = 1e-3
NOISE_FLOOR = 1e-9


def _sym(X):
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def pairing(I, A, B) -> np.ndarray:
    """Per-face ``tr(I^{-1} A I^{-1} B)``."""
    Ia = np.linalg.solve(I, A)
    Ib = np.linalg.solve(I, B)
    return np.einsum("fij,fji->f", Ia, Ib)


# -- paths ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DeformationPath:
    """Linear path in ``(I*, II*)`` followed by Gauss re-projection.

    ``dI`` is a symmetric field and ``dB`` is ``I*``-self-adjoint; the
    induced ``dII = sym(dI B* + I* dB)`` keeps every ``B*(t)``
    self-adjoint. Projection shifts are recorded per evaluated ``t``.
    """

    base: DataAtInfinity
    dI: np.ndarray
    dB: np.ndarray
    dB_nodal: np.ndarray | None = None
    reproject: bool = True
    validate: bool = False
    projections: dict = field(default_factory=dict, repr=False)

    @property
    def dII(self) -> np.ndarray:
        return _sym(self.dI @ self.base.B_star + self.base.I_star @ self.dB)

    def point(self, t: float) -> DataAtInfinity:
        b = self.base
        I = b.I_star + t * self.dI
        II = b.II_star + t * self.dII
        B = np.linalg.solve(I, II)
        B = np.linalg.solve(I, _sym(I @ B))
        nodal = None
        if b.B_nodal is not None or self.dB_nodal is not None:
            nodal = (0 if b.B_nodal is None else np.asarray(b.B_nodal)) + \
                (0 if self.dB_nodal is None else t * np.asarray(self.dB_nodal))
        data = b.with_fields(I_star=I, B_star=B, B_nodal=nodal)
        if self.reproject:
            data, shift = project_gauss(data)
            self.projections[float(t)] = shift
        if self.validate:
            data.validate()
        return data


@dataclass(frozen=True, eq=False)
class ScalingPath:
    """Exact rescaling ``t -> (e^{2t} I*, e^{-2t} B*)``."""

    base: DataAtInfinity
    projections: dict = field(default_factory=dict, repr=False)

    @property
    def dI(self):
        return 2 * self.base.I_star

    @property
    def dB(self):
        return -2 * self.base.B_star

    @property
    def dII(self):
        return np.zeros_like(self.base.I_star)

    def point(self, t: float) -> DataAtInfinity:
        self.projections[float(t)] = 0.0
        return scale_at_infinity(self.base, t)


def constrained_tangent(base: DataAtInfinity, dI, dB_traceless, h: float = 1e-3):
    """Complete ``(dI, dB0)`` by the trace change that keeps ``tr B* = -K*``.

    The first-order curvature change of ``I* + t dI`` is a Richardson-extrapolated
    central difference (steps ``h`` and ``h/2``); the returned ``dB`` is
    ``dB0 + c id`` with ``2c = -K*'``. The re-projection along the path is
    then second order.
    """
    dI = np.asarray(dI, dtype=np.float64)

    def central(step):
        Kp = tensor_curvature(base.mesh, base.metric, base.I_star + step * dI)[1]
        Km = tensor_curvature(base.mesh, base.metric, base.I_star - step * dI)[1]
        return (Kp - Km) / (2 * step)

    dK = (4 * central(h / 2) - central(h)) / 3
    dB0 = np.asarray(dB_traceless, dtype=np.float64)
    # B(t) = I(t)^{-1} II(t) with dII = sym(dI B + I dB); for dI a per-face
    # multiple of I the trace of B(t) moves by t * tr(dB) to first order
    return dB0 + (-0.5 * dK)[:, None, None] * np.eye(2)


# -- leaf formulas ----------------------------------------------------------------

def leaf_derivatives(path, r: float, h: float, richardson: bool = True):
    """``(I_r', II_r')`` by central differences along ``path``."""
    def central(step):
        a = leaf(path.point(step), r)
        b = leaf(path.point(-step), r)
        return (a.I - b.I) / (2 * step), (a.II - b.II) / (2 * step)

    dI, dII = central(h)
    if richardson:
        dI2, dII2 = central(h / 2)
        dI = (4 * dI2 - dI) / 3
        dII = (4 * dII2 - dII) / 3
    return dI, dII


def leaf_formula(path, r: float, h: float = LEAF_STEP, richardson: bool = True) -> float:
    """``1/4 int <II_r' - (H_r/2) I_r', I_r> da_r`` at ``t = 0``."""
    lf = leaf(path.point(0.0), r)
    dI, dII = leaf_derivatives(path, r, h, richardson)
    dens = np.einsum("fij,fji->f", np.linalg.solve(lf.I, dII), np.eye(2)[None]) \
        - 0.5 * lf.H * np.trace(np.linalg.solve(lf.I, dI), axis1=1, axis2=2)
    return 0.25 * float(np.dot(dens, lf.area_element))


def infinity_term(data: DataAtInfinity, dI, dB) -> float:
    """``-1/4 int <II*' - (H*/2) I*', I*> da*`` for the tangent ``(dI, dB)``."""
    dI = np.asarray(dI, dtype=np.float64)
    dII = _sym(dI @ data.B_star + data.I_star @ np.asarray(dB, dtype=np.float64))
    H = data.B_star[:, 0, 0] + data.B_star[:, 1, 1]
    tr_dII = np.trace(np.linalg.solve(data.I_star, dII), axis1=1, axis2=2)
    tr_dI = np.trace(np.linalg.solve(data.I_star, dI), axis1=1, axis2=2)
    return -0.25 * float(np.dot(tr_dII - 0.5 * H * tr_dI, data.area_weights))


def path_infinity_term(path) -> float:
    return infinity_term(path.base, path.dI, path.dB)


# -- finite-difference check ----------------------------------------------------

@dataclass
class BoundaryTermReport:
    r: float
    r_inner: float
    steps: list
    fd_derivative: list
    formula: list
    defects: list
    orders: list
    fd_richardson: float
    formula_richardson: float
    defect: float
    leaf_value: float
    max_projection: float

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def quadratic(self) -> bool:
        """Observed orders near 2 wherever the defects are above the noise floor."""
        meaningful = [o for o, d in zip(self.orders, self.defects[1:]) if d > NOISE_FLOOR]
        return all(1.5 <= o <= 2.5 for o in meaningful) and len(meaningful) > 0


def boundary_term(path, r: float, r_inner: float | None = None,
                  steps=DEFAULT_STEPS, tol: float = 1e-12) -> BoundaryTermReport:
    """Compare ``d/dt W(S_inner, S_r)`` with the two-leaf formula.

    For every step ``h`` both sides use plain central differences with that
    step, so their difference measures the truncation error; the orders
    ``log2(defect_h / defect_{h/2})`` should approach 2. Richardson
    extrapolation over the two finest steps gives the reported defect.
    """
    r_inner = float(r if r_inner is None else r_inner)
    if r_inner == r:
        raise ValueError("boundary_term needs an inner leaf below r")
    fd, form = [], []
    for h in steps:
        wp = relative_w(path.point(h), r_inner, r, tol)
        wm = relative_w(path.point(-h), r_inner, r, tol)
        fd.append((wp - wm) / (2 * h))
        form.append(leaf_formula(path, r, h, richardson=False)
                    - leaf_formula(path, r_inner, h, richardson=False))
    defects = [abs(a - b) for a, b in zip(fd, form)]
    orders = [math.log2(defects[i] / defects[i + 1])
              if defects[i + 1] > 0 and defects[i] > 0 else math.inf
              for i in range(len(defects) - 1)]
    fd_r = (4 * fd[-1] - fd[-2]) / 3
    form_r = (4 * form[-1] - form[-2]) / 3
    return BoundaryTermReport(
        r=float(r), r_inner=r_inner, steps=list(steps), fd_derivative=fd, formula=form,
        defects=defects, orders=orders, fd_richardson=fd_r, formula_richardson=form_r,
        defect=abs(fd_r - form_r), leaf_value=leaf_formula(path, r),
        max_projection=max(path.projections.values(), default=0.0))


def convergence_profile(path, radii=(2.0, 3.0, 4.0), h: float = LEAF_STEP) -> dict:
    """``|leaf formula(r) - infinity term|`` over increasing ``r``.

    ``non_increasing`` allows for the defect sitting at the
    finite-difference noise floor, where it is not ordered.
    """
    target = path_infinity_term(path)
    values = [leaf_formula(path, r, h) for r in radii]
    defects = [abs(v - target) for v in values]
    floor = NOISE_FLOOR * max(1.0, abs(target))
    ok = all(defects[i + 1] <= defects[i] or defects[i + 1] <= floor
             for i in range(len(defects) - 1))
    return {"radii": list(radii), "leaf_values": values, "infinity_term": target,
            "defects": defects, "noise_floor": floor, "non_increasing": ok}


# -- pointwise identity ---------------------------------------------------------

def principal_curvatures(I, II) -> np.ndarray:
    """Eigenvalues ``(F, 2)`` of ``B = I^{-1} II``."""
    I = np.asarray(I, dtype=np.float64)
    II = np.asarray(II, dtype=np.float64)
    Lc = np.linalg.cholesky(I)
    Li = np.linalg.inv(Lc)
    S = Li @ II @ np.swapaxes(Li, -1, -2)
    return np.linalg.eigvalsh(_sym(S))


def willmore_identity_check(I, II) -> np.ndarray:
    """Per-face ``|2 tr(B^2) - H^2 - (k1 - k2)^2|`` for ``B = I^{-1} II``.

    Equivalently ``2 <II, II - (H/2) I> = (k1 - k2)^2``.
    """
    I = np.atleast_3d(np.asarray(I, dtype=np.float64)).reshape(-1, 2, 2)
    II = np.asarray(II, dtype=np.float64).reshape(-1, 2, 2)
    B = np.linalg.solve(I, II)
    H = B[:, 0, 0] + B[:, 1, 1]
    trB2 = np.einsum("fij,fji->f", B, B)
    k = principal_curvatures(I, II)
    return np.abs(2 * trB2 - H * H - (k[:, 1] - k[:, 0]) ** 2)
