"""Closed-form bound arithmetic for renormalized volume.

All inputs that the toolkit cannot compute (Weil-Petersson distances, convex
core volumes, bending lengths, Bridgeman-type constants) are passed in.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

NEHARI_INNER = 2.0
NEHARI_OUTER = 6.0

STEP_CONSTANT_NOTE = (
    "integrand constant 3*sqrt(pi*(g-1)) = (1/4) * 6 * sqrt(4 pi (g-1)), from the "
    "L2-radius chain; the variant 3*pi*sqrt(g-1) is not used")


class DomainError(ValueError):
    pass


def _check_genus(g):
    if int(g) != g or g < 2:
        raise DomainError(f"genus must be an integer >= 2, got {g!r}")


def nehari_radii() -> tuple[float, float]:
    """Inner and outer sup-norm radii for Schwarzians of univalent maps."""
    return NEHARI_INNER, NEHARI_OUTER


def hyperbolic_area(g: int) -> float:
    _check_genus(g)
    return 4 * math.pi * (g - 1)


def l2_radius(g: int) -> float:
    """``12 sqrt(pi (g-1))``: outer Nehari radius times ``sqrt(area)``."""
    _check_genus(g)
    return 12.0 * math.sqrt(math.pi * (g - 1))


def l2_radius_chain(g: int) -> dict:
    """The derivation path of :func:`l2_radius` for cross-checks."""
    area = hyperbolic_area(g)
    chained = NEHARI_OUTER * math.sqrt(area)
    return {"linf_radius": NEHARI_OUTER, "area": area, "chained": chained,
            "closed_form": l2_radius(g)}


def integrand_constant(g: int) -> float:
    """``(1/4) l2_radius(g)``, the pointwise bound on the volume derivative."""
    return 0.25 * l2_radius(g)


def vr_upper(g: int, d_wp: float) -> float:
    """``3 sqrt(pi (g-1)) d_WP``."""
    _check_genus(g)
    if not d_wp >= 0:
        raise DomainError("d_wp must be >= 0")
    c = 3.0 * math.sqrt(math.pi * (g - 1))
    if not math.isclose(c, integrand_constant(g), rel_tol=1e-15, abs_tol=0.0):
        raise AssertionError("integrand constant disagrees with the L2 radius chain")
    return c * d_wp


@dataclass
class BoundsInput:
    genus: int
    d_wp: float
    V_C: float | None = None
    V_R: float | None = None
    L_ml: float | None = None
    bridgeman_Kg: float | None = None
    C_g: float | None = None

    def __post_init__(self):
        _check_genus(self.genus)
        if not self.d_wp >= 0:
            raise DomainError("d_wp must be >= 0")
        if self.L_ml is not None and not self.L_ml >= 0:
            raise DomainError("L_ml must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "BoundsInput":
        known = {"genus", "d_wp", "V_C", "V_R", "L_ml", "bridgeman_Kg", "C_g"}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown fields: {sorted(unknown)}")
        return cls(**{k: (None if v in ("", None) else float(v)) if k != "genus" else int(v)
                      for k, v in data.items()})


def _entry(name, lhs, rhs, note=None, tol=1e-12):
    margin = rhs - lhs
    out = {"inequality": name, "lhs": lhs, "rhs": rhs, "margin": margin,
           "passed": margin >= -tol}
    if abs(margin) <= tol:
        out["equality"] = True
    if note:
        out["note"] = note
    return out


def audit_compare(inp: BoundsInput) -> dict:
    """Evaluate the volume inequalities that the supplied numbers allow.

    * ``V_R <= V_C - L/4`` and ``V_C - L/4 <= V_R + C_g``
    * ``V_R <= 3 sqrt(pi (g-1)) d_WP``
    * ``V_C <= 3 sqrt(pi (g-1)) d_WP + K_g``
    """
    checks, skipped = [], []
    ub = vr_upper(inp.genus, inp.d_wp)
    if None not in (inp.V_R, inp.V_C, inp.L_ml):
        mid = inp.V_C - 0.25 * inp.L_ml
        e = _entry("V_R <= V_C - L/4", inp.V_R, mid)
        if e.get("equality") and inp.V_R == 0 and inp.L_ml == 0:
            e["note"] = "equality holds exactly for Fuchsian manifolds"
        checks.append(e)
        if inp.C_g is not None:
            checks.append(_entry("V_C - L/4 <= V_R + C_g", mid, inp.V_R + inp.C_g))
        else:
            skipped.append({"inequality": "V_C - L/4 <= V_R + C_g", "missing": ["C_g"]})
    else:
        missing = [k for k in ("V_R", "V_C", "L_ml") if getattr(inp, k) is None]
        skipped.append({"inequality": "V_R <= V_C - L/4", "missing": missing})
    if inp.V_R is not None:
        checks.append(_entry("V_R <= 3 sqrt(pi(g-1)) d_WP", inp.V_R, ub))
    else:
        skipped.append({"inequality": "V_R <= 3 sqrt(pi(g-1)) d_WP", "missing": ["V_R"]})
    if inp.V_C is not None and inp.bridgeman_Kg is not None:
        checks.append(_entry("V_C <= 3 sqrt(pi(g-1)) d_WP + K_g", inp.V_C, ub + inp.bridgeman_Kg))
    else:
        missing = [k for k in ("V_C", "bridgeman_Kg") if getattr(inp, k) is None]
        skipped.append({"inequality": "V_C <= 3 sqrt(pi(g-1)) d_WP + K_g", "missing": missing})
    return {"input": asdict(inp), "vr_upper": ub, "checks": checks, "skipped": skipped,
            "passed": all(c["passed"] for c in checks), "notes": [STEP_CONSTANT_NOTE],
            "area_convention": "per boundary component, 4 pi (g-1)"}
