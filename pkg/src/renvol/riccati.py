"""The comparison ODE ``y' = 1 - (1 + 2/r^2) y^2``, its inverse and disk bounds.

The solution ``y0`` vanishing at 0 has the odd expansion
``y0 = r/2 - r^3/20 + 9 r^5/1400 + O(r^7)``: substituting ``a r + b r^3 + c r^5``
gives ``a = 1 - 2a^2`` (so ``a = 1/2``), ``3b = -(4ab + a^2)`` and
``5c = -(2b^2 + 4ac + 2ab)``. Integration starts from the series at
``r = 1e-3``, where the truncation error is below ``1e-21``.

``phi`` is the inverse function of ``y0`` on ``[0, 1)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import _accel
from .fixtures import geodesic_disk
from .mesh import cotan_laplacian, dual_areas

SERIES = (0.5, -1.0 / 20.0, 9.0 / 1400.0)
R_START = 1e-3
R_MAX = 30.0
TOL = 1e-12
H_MAX = 0.05
TABLE_VERSION = "y0-dopri5-hermite5-v1"


class DomainError(ValueError):
    pass


def series(r):
    r = np.asarray(r, dtype=np.float64)
    r2 = r * r
    return r * (SERIES[0] + r2 * (SERIES[1] + r2 * SERIES[2]))


def series_derivative(r):
    r = np.asarray(r, dtype=np.float64)
    r2 = r * r
    return SERIES[0] + r2 * (3 * SERIES[1] + r2 * 5 * SERIES[2])


def rhs(r, y):
    return 1.0 - (1.0 + 2.0 / (r * r)) * y * y


def second_derivative(r, y, dy):
    """``y''`` from differentiating the ODE once."""
    return -2.0 * (1.0 + 2.0 / (r * r)) * y * dy + 4.0 * y * y / (r * r * r)


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    r: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    r_max: float
    tol: float
    r_start: float = R_START
    rejected_steps: int = 0
    backend: str = ""

    @functools.cached_property
    def d2y(self) -> np.ndarray:
        return second_derivative(self.r, self.y, self.dy)

    def __call__(self, r):
        """``y0(r)`` by quintic Hermite interpolation (series below the start)."""
        r_arr = np.asarray(r, dtype=np.float64)
        scalar = r_arr.ndim == 0
        r_arr = np.atleast_1d(r_arr)
        if np.any(r_arr < 0) or np.any(r_arr > self.r_max * (1 + 1e-15)):
            raise DomainError(f"r outside the table [0, {self.r_max:g}]")
        out = np.empty_like(r_arr)
        low = r_arr < self.r_start
        out[low] = series(r_arr[low])
        hi = ~low
        if np.any(hi):
            out[hi] = self._hermite(r_arr[hi])[0]
        return float(out[0]) if scalar else out

    def derivative(self, r):
        r_arr = np.atleast_1d(np.asarray(r, dtype=np.float64))
        out = np.where(r_arr < self.r_start, series_derivative(r_arr), 0.0)
        hi = r_arr >= self.r_start
        if np.any(hi):
            out[hi] = self._hermite(r_arr[hi])[1]
        return float(out[0]) if np.ndim(r) == 0 else out

    def _hermite(self, x):
        i = np.clip(np.searchsorted(self.r, x, side="right") - 1, 0, len(self.r) - 2)
        r0, r1 = self.r[i], self.r[i + 1]
        h = r1 - r0
        t = (x - r0) / h
        y0, y1 = self.y[i], self.y[i + 1]
        d0, d1 = self.dy[i] * h, self.dy[i + 1] * h
        s0, s1 = self.d2y[i] * h * h, self.d2y[i + 1] * h * h
        t2, t3 = t * t, t * t * t
        t4, t5 = t3 * t, t3 * t2
        h00 = 1 - 10 * t3 + 15 * t4 - 6 * t5
        h10 = t - 6 * t3 + 8 * t4 - 3 * t5
        h20 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5)
        h01 = 10 * t3 - 15 * t4 + 6 * t5
        h11 = -4 * t3 + 7 * t4 - 3 * t5
        h21 = 0.5 * (t3 - 2 * t4 + t5)
        val = h00 * y0 + h10 * d0 + h20 * s0 + h01 * y1 + h11 * d1 + h21 * s1
        g00 = -30 * t2 + 60 * t3 - 30 * t4
        g10 = 1 - 18 * t2 + 32 * t3 - 15 * t4
        g20 = 0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4)
        g01 = 30 * t2 - 60 * t3 + 30 * t4
        g11 = -12 * t2 + 28 * t3 - 15 * t4
        g21 = 0.5 * (3 * t2 - 8 * t3 + 5 * t4)
        der = (g00 * y0 + g10 * d0 + g20 * s0 + g01 * y1 + g11 * d1 + g21 * s1) / h
        return val, der

    @property
    def y_max(self) -> float:
        return float(self.y[-1])

    def phi(self, delta: float) -> float:
        """Inverse of ``y0``: the ``r`` with ``y0(r) = delta``."""
        delta = float(delta)
        if not (0.0 <= delta < 1.0) or math.isnan(delta):
            raise DomainError(f"phi is defined on [0, 1); got {delta!r} (phi -> inf as delta -> 1)")
        if delta == 0.0:
            return 0.0
        if delta > self.y_max:
            raise DomainError(f"delta = {delta!r} exceeds the table (y0({self.r_max:g}) = "
                              f"{self.y_max:.12g}); solve with a larger r_max")
        if delta < self.y[0]:
            # Newton on the odd series, starting from the linearization r = 2 delta
            r = 2.0 * delta
            for _ in range(50):
                step = (float(series(r)) - delta) / float(series_derivative(r))
                r -= step
                if abs(step) <= 1e-17 * max(r, 1e-300):
                    break
            return r
        i = int(np.searchsorted(self.y, delta, side="right")) - 1
        i = min(max(i, 0), len(self.r) - 2)
        a, b = self.r[i], self.r[i + 1]
        if self.y[i] == delta:
            return float(a)
        return brentq(lambda x: self._hermite(np.array([x]))[0][0] - delta, a, b,
                      xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)

    def invariants(self) -> dict:
        inc = bool(np.all(np.diff(self.y) > 0))
        below_one = bool(np.all(self.y < 1))
        small = self.r <= 0.5
        lower = self.r[small] / 2 - self.r[small] ** 3 / 20
        series_ok = bool(np.all(self.y[small] >= lower - self.tol))
        big = self.r >= 5
        C = float(np.max((1 - self.y[big]) * self.r[big])) if np.any(big) else math.nan
        return {"increasing": inc, "below_one": below_one, "series_lower_bound": series_ok,
                "tail_constant_C": C, "passed": inc and below_one and series_ok}


@functools.lru_cache(maxsize=8)
def solve_y0(r_max: float = R_MAX, tol: float = TOL, h_max: float = H_MAX) -> RiccatiSolution:
    """Tabulate ``y0`` on ``[0, r_max]`` with the Dormand-Prince 5(4) kernel."""
    if not r_max > R_START:
        raise ValueError(f"r_max must exceed {R_START}")
    y_start = float(series(R_START))
    try:
        r, y, dy, rej = _accel.riccati_dopri5(R_START, y_start, float(r_max), float(tol),
                                              float(tol) * 1e-2, float(h_max))
    except RuntimeError as exc:
        raise RuntimeError(f"Riccati integration failed: {exc}") from exc
    sol = RiccatiSolution(r, y, dy, float(r_max), float(tol), R_START, int(rej), _accel.BACKEND)
    inv = sol.invariants()
    if not inv["passed"]:
        raise RuntimeError(f"Riccati table violates its invariants: {inv}")
    return sol


def reference_y0(r_eval, rtol: float = 1e-13, atol: float = 1e-15):
    """Independent solution with scipy's DOP853, started from the same series."""
    r_eval = np.asarray(r_eval, dtype=np.float64)
    res = solve_ivp(lambda r, y: rhs(r, y), (R_START, float(r_eval.max())),
                    [float(series(R_START))], method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True)
    if not res.success:
        raise RuntimeError(res.message)
    out = np.where(r_eval < R_START, series(r_eval), 0.0)
    hi = r_eval >= R_START
    out[hi] = res.sol(r_eval[hi])[0]
    return out


def phi(delta: float, solution: RiccatiSolution | None = None) -> float:
    return (solution or solve_y0()).phi(delta)


def cor_disk_radius(k: float, delta: float, laplacian_bound: float,
                    solution: RiccatiSolution | None = None) -> float:
    """``phi(k^2 delta / Delta0) / k``."""
    if not (k > 0 and laplacian_bound > 0 and delta >= 0):
        raise DomainError("need k > 0, Delta0 > 0 and delta >= 0")
    arg = k * k * delta / laplacian_bound
    if arg >= 1:
        raise DomainError(f"k^2 delta / Delta0 = {arg:.6g} must be < 1")
    return phi(arg, solution) / k


def disk_argument(k: float, genus: int) -> float:
    return k * k * (3.0 * math.sqrt(math.pi * (genus - 1))) / 2.0


def disk_radius_bound(k: float, genus: int, solution: RiccatiSolution | None = None) -> float:
    """``phi(3 k^2 sqrt(pi (g-1)) / 2) / k``, valid when ``3 k^2 sqrt(pi (g-1)) < 2``."""
    if not (k > 0 and genus >= 2 and int(genus) == genus):
        raise DomainError("need k > 0 and integer genus >= 2")
    lhs = 3.0 * k * k * math.sqrt(math.pi * (genus - 1))
    if lhs >= 2:
        raise DomainError(f"precondition 3 k^2 sqrt(pi (g-1)) < 2 fails: "
                          f"3 * {k:g}^2 * sqrt(pi * {genus - 1}) = {lhs:.6g}")
    return cor_disk_radius(k, 3.0 * math.sqrt(math.pi * (genus - 1)), 2.0, solution)


# -- constant-curvature model disks ---------------------------------------------

def model_profile(k: float, r):
    """``A, L, y = A/L, y'`` on the disk of curvature ``-k^2``, cancellation-free."""
    r = np.asarray(r, dtype=np.float64)
    if k == 0:
        return np.pi * r * r, 2 * np.pi * r, 0.5 * r, np.full_like(r, 0.5)
    half = np.sinh(0.5 * k * r)
    A = 4 * np.pi * half * half / (k * k)
    L = 2 * np.pi * np.sinh(k * r) / k
    y = np.tanh(0.5 * k * r) / k
    dy = 0.5 / np.cosh(0.5 * k * r) ** 2
    return A, L, y, dy


def mesh_mean_growth(k: float, radius: float, n_rings: int = 24):
    """Solve ``div grad u = 1`` with ``u = 0`` on the boundary of a disk mesh.

    Returns ring radii and central-difference derivatives of the ring means.
    """
    fx = geodesic_disk(k, radius, n_rings=n_rings)
    mesh, metric = fx.mesh, fx.metric
    import scipy.sparse.linalg as spla
    L = cotan_laplacian(mesh, metric).tocsr()
    A = dual_areas(mesh, metric)
    bnd = np.zeros(mesh.n_vertices, dtype=bool)
    bnd[mesh.boundary_vertices] = True
    inner = np.flatnonzero(~bnd)
    u = np.zeros(mesh.n_vertices)
    u[inner] = spla.spsolve(L[inner][:, inner].tocsc(), A[inner])
    radii = np.asarray(fx.tags["ring_radii"])
    means = np.array([u[ring].mean() for ring in fx.tags["rings"]])
    mid = radii[1:-1]
    growth = (means[2:] - means[:-2]) / (radii[2:] - radii[:-2])
    return mid, growth


def ball_profile_check(k: float, r_max: float, solution: RiccatiSolution | None = None,
                       n_samples: int = 200, mesh_check: bool = True, n_rings: int = 24,
                       mesh_tol: float = 0.02) -> dict:
    """Audit the geodesic-ball mechanism on the curvature ``-k^2`` model.

    * ODE identity ``y' = 1 + (K - 2 pi / A) y^2`` for ``y = A/L`` (to 1e-10);
    * comparison ``y >= y0`` when ``k <= 1``;
    * mesh cross-check: boundary-mean growth of the solution of ``div grad u = 1``
      against ``y`` (relative error within ``mesh_tol`` on rings past the first).
    """
    if k < 0:
        raise DomainError("k must be >= 0")
    sol = solution or solve_y0()
    r = np.linspace(r_max / n_samples, r_max, n_samples)
    A, Lr, y, dy = model_profile(k, r)
    identity = np.abs(dy - (1 + (-k * k - 2 * np.pi / A) * y * y))
    report = {"k": k, "r_max": r_max, "identity_defect": float(identity.max()),
              "identity_ok": bool(identity.max() <= 1e-10)}
    if k <= 1:
        rr = r[r <= sol.r_max]
        gap = y[: rr.size] - sol(rr)
        report["comparison_min_gap"] = float(gap.min())
        report["comparison_ok"] = bool(gap.min() >= -1e-12)
    else:
        report["comparison_ok"] = True
    if mesh_check:
        mid, growth = mesh_mean_growth(k, r_max, n_rings)
        expected = model_profile(k, mid)[2]
        rel = np.abs(growth - expected) / expected
        # the first ring has a one-sided stencil through the centre vertex
        rel = rel[1:]
        report["mesh_max_rel_error"] = float(rel.max())
        report["mesh_ok"] = bool(rel.max() <= mesh_tol)
    else:
        report["mesh_ok"] = True
    report["passed"] = report["identity_ok"] and report["comparison_ok"] and report["mesh_ok"]
    return report
