"""The ten acceptance criteria as a deterministic pipeline.

Each ``criterion_N(seed)`` returns a JSON-ready dict with ``passed`` and the
measured quantities. Wall-clock times are kept out of those dicts so that
repeated runs produce byte-identical reports; :func:`run_pipeline` returns them
separately.
"""

from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np
import scipy.sparse.linalg as spla

from . import bounds as bd
from . import conformal as cf
from . import end_geometry as eg
from . import fixtures as fx
from . import grafting as gr
from . import riccati as rc
from . import tensorfield as tf
from . import variation as vr
from .io import dumps
from .mesh import angle_defect_curvature, cotan_laplacian, mass_matrix, total_area

DEFAULT_SEED = 20240521

RUNTIME_LIMITS = {1: 5.0, 2: 60.0, 3: 120.0, 4: 60.0, 5: 60.0, 6: 60.0, 7: 30.0,
                  8: 60.0, 9: 120.0, 10: 900.0}

NAMES = {
    1: "Gauss-Bonnet exactness and fixture area",
    2: "uniformization round trip and comparison lemma",
    3: "Codazzi kernel dimension",
    4: "foliation slope universality",
    5: "scaling identity",
    6: "variation formulas",
    7: "Riccati solution and phi",
    8: "bound arithmetic",
    9: "grafting",
    10: "determinism",
}

# octagon level used by the foliation criteria (4-6); see the ledger
END_LEVEL = 3
SWEEP_RADII = tuple(np.arange(0.5, 4.0001, 0.25).round(10))
SCALING_RADII = tuple(np.arange(1.5, 4.0001, 0.25).round(10))


def _rng(seed, k):
    return np.random.default_rng([int(seed), int(k)])


def _hyperbolic_octagon(level):
    f = fx.octagon_g2(level)
    return f, cf.hyperbolize(f.mesh, f.metric, tol=1e-12)


# -- 1 ----------------------------------------------------------------------------

def criterion_1(seed=DEFAULT_SEED) -> dict:
    fixtures = {"flat_torus": fx.flat_torus(), "tetrahedron": fx.tetrahedron(),
                "octagon_g2": fx.octagon_g2(), "polygon_g3": fx.polygon_g3()}
    gb = {}
    for name, f in fixtures.items():
        total = float(angle_defect_curvature(f.mesh, f.metric).sum())
        target = 2 * math.pi * f.mesh.euler_characteristic
        gb[name] = {"total_defect": total, "target": target, "error": abs(total - target)}
    default = fixtures["octagon_g2"]
    finer = fx.octagon_g2(default.level + 1)
    err0 = abs(total_area(default.mesh, default.metric) / (4 * math.pi) - 1)
    err1 = abs(total_area(finer.mesh, finer.metric) / (4 * math.pi) - 1)
    ok_gb = all(v["error"] <= 1e-9 for v in gb.values())
    return {"gauss_bonnet": gb, "default_level": default.level,
            "area_rel_error": err0, "area_rel_error_refined": err1,
            "refinement_ratio": err0 / err1,
            "passed": bool(ok_gb and err0 <= 5e-3 and err1 <= 0.5 * err0)}


# -- 2 ----------------------------------------------------------------------------

def smooth_fields(mesh, metric, n, rng, modes=12, amplitude=0.4):
    """Random combinations of low Laplacian eigenfunctions, scaled to ``max |v| = amplitude``."""
    L = -cotan_laplacian(mesh, metric)
    M = mass_matrix(mesh, metric)
    _, vec = spla.eigsh(L.tocsc(), k=modes + 1, M=M.tocsc(), sigma=-1e-3,
                        v0=np.ones(mesh.n_vertices))
    vec = vec[:, 1:]
    out = []
    for _ in range(n):
        c = rng.normal(size=modes) / np.arange(1, modes + 1)
        v = vec @ c
        out.append(amplitude * v / np.abs(v).max())
    return out


def criterion_2(seed=DEFAULT_SEED) -> dict:
    f, hyp = _hyperbolic_octagon(4)
    rng = _rng(seed, 2)
    errs, lemma = [], []
    for v in smooth_fields(f.mesh, hyp, 20, rng):
        m = cf.conformal_scale(f.mesh, hyp, v)
        u = cf.uniformize(f.mesh, m, tol=1e-12)
        errs.append(float(np.abs(u + v).max()))
        lemma.append(cf.check_comparison_lemma(f.mesh, m))
    for c in (1.05, 1.5, 2.0):
        lemma.append(cf.check_comparison_lemma(f.mesh, hyp.scaled(c)))
    held = [r for r in lemma if r["hypothesis_held"]]
    return {"round_trip_max_error": max(errs), "round_trip_errors": errs,
            "lemma_instances": len(lemma), "lemma_hypothesis_held": len(held),
            "lemma_min_u_where_held": min(r["min_u"] for r in held),
            "lemma_passed": all(r["passed"] for r in lemma),
            "passed": bool(max(errs) <= 1e-6 and all(r["passed"] for r in lemma) and held)}


# -- 3 ----------------------------------------------------------------------------

KERNEL_CASES = ((2, 2), (2, 3), (3, 3), (3, 4))


def criterion_3(seed=DEFAULT_SEED) -> dict:
    cases = []
    for g, level in KERNEL_CASES:
        f = fx.polygon_surface(g, level)
        hyp = cf.hyperbolize(f.mesh, f.metric)
        sv = tf.smallest_singular_values(f.mesh, hyp)
        dim, ratio = tf.spectral_gap(sv)
        cases.append({"genus": g, "level": level, "dimension": dim, "expected": 6 * g - 6,
                      "gap_ratio": ratio, "singular_values": sv.tolist(),
                      "passed": bool(dim == 6 * g - 6 and ratio >= tf.GAP_RATIO_MIN)})
    return {"cases": cases, "passed": all(c["passed"] for c in cases)}


# -- 4 ----------------------------------------------------------------------------

def _end_setup(level=END_LEVEL):
    f, hyp = _hyperbolic_octagon(level)
    data = eg.fuchsian_data(f.mesh, hyp)
    basis = tf.codazzi_basis(f.mesh, hyp)
    return f, hyp, data, basis


def _perturbations(data, basis, rng, n, eps=0.3):
    out = []
    for _ in range(n):
        c = rng.normal(size=basis.dimension)
        out.append(eg.perturbed_data(data, basis, c / np.linalg.norm(c), eps))
    return out


def criterion_4(seed=DEFAULT_SEED, setup=None) -> dict:
    f, hyp, data, basis = setup or _end_setup()
    data.validate()
    area = total_area(f.mesh, hyp)
    sw = eg.sweep(data, SWEEP_RADII)
    oracle = np.array([eg.fuchsian_relative_w(area, sw.anchor, r) for r in sw.radii])
    oracle_err = float(np.abs(sw.w_rel - oracle).max())
    target = 2 * math.pi
    slopes, residuals, val = [], [], []
    for d in _perturbations(data, basis, _rng(seed, 4), 20):
        val.append(d.validate())
        s = eg.sweep(d, SWEEP_RADII)
        slopes.append(s.slope)
        residuals.append(s.residual)
    slope_errs = [abs(s - target) for s in [sw.slope] + slopes]
    return {"fuchsian": {"slope": sw.slope, "intercept": sw.intercept,
                         "affinity_residual": sw.residual, "oracle_error": oracle_err},
            "slope_comparison": sw.slope_report(),
            "perturbed": {"count": len(slopes), "slopes": slopes,
                          "max_slope_error": max(slope_errs[1:]),
                          "max_affinity_residual": max(residuals),
                          "max_codazzi_residual": max(v["codazzi_residual"] for v in val),
                          "max_gauss_residual": max(v["gauss_residual"] for v in val)},
            "passed": bool(max(slope_errs) <= 1e-4 and oracle_err <= 1e-6
                           and max(residuals + [sw.residual]) <= 1e-6)}


# -- 5 ----------------------------------------------------------------------------

SCALINGS = (-0.5, 0.3, 1.0)


def scaling_shift(data, rho, anchor=0.5):
    """Intercept shift of the sweep after ``scale_at_infinity(rho)``, common anchor leaf."""
    a = eg.sweep(data, SCALING_RADII, anchor=anchor)
    b = eg.sweep(eg.scale_at_infinity(data, rho), SCALING_RADII, anchor=anchor - rho)
    return a, b.intercept - a.intercept


def criterion_5(seed=DEFAULT_SEED, setup=None) -> dict:
    """Checks the stated shift ``-slope * rho``.

    Leaf reindexing forces ``+slope * rho``; that identity is recorded per row
    as ``reindexed_error`` but does not decide the verdict.
    """
    f, hyp, data, basis = setup or _end_setup()
    pert = _perturbations(data, basis, _rng(seed, 5), 1)[0]
    rows = []
    for d, label in ((data, "fuchsian"), (pert, "perturbed")):
        for rho in SCALINGS:
            a, shift = scaling_shift(d, rho)
            expected = -a.slope * rho
            reidx = max(eg.leaf_reindexing_defect(d, rho, r) for r in (2.0, 3.0))
            rows.append({"data": label, "rho": rho, "slope": a.slope, "shift": shift,
                         "expected_shift": expected,
                         "relative_error": abs(shift - expected) / abs(expected),
                         "reindexed_error": abs(shift + expected) / abs(expected),
                         "reindexing_defect": reidx})
    return {"rows": rows, "sign_convention": "stated: intercept shift = -slope * rho",
            "reindexed_identity_holds": all(r["reindexed_error"] <= 1e-8 for r in rows),
            "passed": all(r["relative_error"] <= 1e-8 and r["reindexing_defect"] <= 1e-12
                          for r in rows)}


# -- 6 ----------------------------------------------------------------------------

def conformal_tangent(data, basis, hyp, mode=2, index=1, scale=0.5):
    """Gauss-preserving tangent: conformal change of ``I*`` plus a Codazzi ``dB``.

    The conformal factor is a Laplacian eigenfunction plus the constant
    ``scale``, so the tangent has a nonzero W-derivative.
    """
    mesh = data.mesh
    L = -cotan_laplacian(mesh, hyp)
    _, vec = spla.eigsh(L.tocsc(), k=mode + 2, M=mass_matrix(mesh, hyp).tocsc(), sigma=-1e-3,
                        v0=np.ones(mesh.n_vertices))
    phi = vec[:, mode][mesh.faces].mean(axis=1)
    phi = phi / np.abs(phi).max() + scale
    dI = 2 * phi[:, None, None] * data.I_star
    dB = vr.constrained_tangent(data, dI, basis.fields[index])
    return vr.DeformationPath(data, dI, dB, dB_nodal=basis.nodal[index])


def criterion_6(seed=DEFAULT_SEED, setup=None, slope=None) -> dict:
    f, hyp, data, basis = setup or _end_setup()
    rng = _rng(seed, 6)
    pert = _perturbations(data, basis, rng, 1)[0]
    path = conformal_tangent(pert, basis, hyp)
    rep = vr.boundary_term(path, 3.0, 1.0)
    prof = vr.convergence_profile(path, (2.0, 3.0, 4.0))
    scaling = vr.path_infinity_term(vr.ScalingPath(pert))
    if slope is None:
        slope = eg.sweep(pert, SWEEP_RADII).slope
    # Willmore identity on random O(1) data: I with eigenvalues in [1/2, 2]
    th = rng.uniform(0, np.pi, 1000)
    c, s = np.cos(th), np.sin(th)
    R = np.stack([c, -s, s, c], 1).reshape(-1, 2, 2)
    lam = rng.uniform(0.5, 2.0, (1000, 2))
    I = R @ (lam[:, :, None] * np.eye(2)) @ np.swapaxes(R, 1, 2)
    S = rng.normal(size=(1000, 2, 2))
    II = 0.5 * (S + np.swapaxes(S, 1, 2))
    will = float(vr.willmore_identity_check(I, II).max())
    return {"fd_check": rep.to_dict(), "fd_quadratic": rep.quadratic,
            "convergence_profile": prof, "scaling_tangent": scaling,
            "scaling_vs_sweep_slope": abs(scaling - slope), "willmore_max_defect": will,
            "passed": bool(rep.defect <= 1e-4 and rep.quadratic and prof["non_increasing"]
                           and abs(scaling - 2 * math.pi) <= 1e-4
                           and abs(scaling - slope) <= 1e-4 and will <= 1e-12)}


# -- 7 ----------------------------------------------------------------------------

def _odd_fit_slope(x, y):
    X = np.stack([x, x ** 3, x ** 5, x ** 7], 1)
    return float(np.linalg.lstsq(X, y, rcond=None)[0][0])


def criterion_7(seed=DEFAULT_SEED) -> dict:
    sol = rc.solve_y0()
    # derivatives at 0 from the integrated table only (r past the series start)
    r = np.linspace(0.02, 0.3, 29)
    y_slope = _odd_fit_slope(r, sol(r))
    d = np.linspace(0.01, 0.15, 29)
    phi_slope = _odd_fit_slope(d, np.array([sol.phi(x) for x in d]))
    rr = np.linspace(0.0, 30.0, 3001)
    agree = float(np.abs(sol(rr) - rc.reference_y0(rr)).max())
    xs = np.linspace(0.001, 29.9, 400)
    inverse = float(max(abs(sol.phi(sol(x)) - x) for x in xs))
    try:
        rc.disk_radius_bound(1.0, 2, sol)
        rejected = False
    except rc.DomainError:
        rejected = True
    balls = [rc.ball_profile_check(k, 3.0, sol) for k in (0.0, 0.5, 1.0)]
    inv = sol.invariants()
    return {"y0_prime_0": y_slope, "phi_prime_0": phi_slope, "integrator_agreement": agree,
            "one_minus_y0_30": 1 - sol(30.0), "phi_inverse_error": inverse,
            "precondition_rejected_g2_k1": rejected,
            "disk_radius_bound_k0.5_g2": rc.disk_radius_bound(0.5, 2, sol),
            "ball_checks": balls, "invariants": inv, "table_version": rc.TABLE_VERSION,
            "passed": bool(abs(y_slope - 0.5) <= 1e-8 and abs(phi_slope - 2) <= 1e-6
                           and agree <= 1e-9 and 1 - sol(30.0) <= 0.05 and inverse <= 1e-8
                           and rejected and all(b["passed"] for b in balls)
                           and inv["passed"])}


# -- 8 ----------------------------------------------------------------------------

def criterion_8(seed=DEFAULT_SEED) -> dict:
    f, hyp = _hyperbolic_octagon(3)
    rng = _rng(seed, 8)
    area = total_area(f.mesh, hyp)
    worst = -math.inf
    for _ in range(100):
        q = rng.normal(size=f.mesh.n_faces) + 1j * rng.normal(size=f.mesh.n_faces)
        q *= rng.lognormal()
        n = tf.qd_norms(f.mesh, hyp, q)
        worst = max(worst, n["l2"] / (n["linf"] * math.sqrt(area)))
    radii = bd.nehari_radii()
    l2 = bd.l2_radius(2)
    vu = bd.vr_upper(2, 1.0)
    return {"nehari_radii": list(radii), "l2_radius_2": l2,
            "l2_radius_error": abs(l2 - 12 * math.sqrt(math.pi)),
            "vr_upper_2_1": vu, "vr_upper_error": abs(vu - 3 * math.sqrt(math.pi)),
            "vr_upper_vs_quarter_l2": abs(vu - 0.25 * l2),
            "area": area, "max_l2_over_linf_sqrt_area": worst,
            "passed": bool(radii == (2.0, 6.0) and abs(l2 - 12 * math.sqrt(math.pi)) <= 1e-12
                           and abs(vu - 3 * math.sqrt(math.pi)) <= 1e-12
                           and abs(vu - 0.25 * l2) <= 1e-12 and worst <= 1 + 1e-12)}


# -- 9 ----------------------------------------------------------------------------

GRAFT_WEIGHTS = (0.1, 0.5, 1.0)


def criterion_9(seed=DEFAULT_SEED) -> dict:
    f, hyp = _hyperbolic_octagon(4)
    spec = gr.shorten_to_geodesic(f.mesh, hyp, f.tags["systole_loop"])
    systole = f.tags["geometry"]["systole"]
    zero = gr.graft(f.mesh, hyp, replace(spec, w=0.0))
    identity = zero.mesh is f.mesh and zero.metric is hyp
    rows = []
    for w in GRAFT_WEIGHTS:
        res = gr.graft(f.mesh, hyp, replace(spec, w=w))
        dom = gr.domination_check(res)
        rows.append({"w": w, "columns": res.columns, "area_defect": gr.area_identity_defect(res),
                     "chi_preserved": res.mesh.euler_characteristic == f.mesh.euler_characteristic,
                     "min_u": dom["min_u"], "max_u": dom["max_u"], "passed": dom["passed"],
                     "curvature": dom["curvature"]})
    mono = gr.monotonicity_probe(f.mesh, hyp, spec, GRAFT_WEIGHTS)
    corr = gr.normalization_correction(4 * math.pi, 4 * math.pi, -2)
    corr_err = abs(corr - 2 * math.pi * math.log(2))
    return {"geodesic": {"length": spec.length, "systole": systole,
                         "relative_error": abs(spec.length / systole - 1),
                         "turning_residual": spec.residual},
            "w0_identity": identity, "grafts": rows, "monotonicity": mono,
            "normalization_correction": corr, "normalization_error": corr_err,
            "passed": bool(identity and all(r["area_defect"] <= 1e-9 and r["passed"]
                                            and r["chi_preserved"] for r in rows)
                           and corr_err <= 1e-12 and mono["passed"])}


# -- pipeline -----------------------------------------------------------------------

def run_pipeline(seed=DEFAULT_SEED, criteria=range(1, 10)) -> tuple[dict, dict]:
    """Run criteria 1-9. Returns ``(reports, timings)``."""
    reports, timings = {}, {}
    setup = None
    for k in criteria:
        t0 = time.perf_counter()
        if k in (4, 5, 6):
            if setup is None:
                setup = _end_setup()
            rep = CRITERIA[k](seed, setup)
        else:
            rep = CRITERIA[k](seed)
        timings[k] = time.perf_counter() - t0
        reports[k] = {"criterion": k, "name": NAMES[k], **rep}
    return reports, timings


def report_bytes(reports: dict) -> bytes:
    return dumps({"conventions": eg.CONVENTIONS,
                  "criteria": {str(k): v for k, v in sorted(reports.items())}}).encode()


def criterion_10(seed=DEFAULT_SEED, first: dict | None = None) -> dict:
    """Re-run the pipeline and compare the serialized reports byte for byte."""
    if first is None:
        first, _ = run_pipeline(seed)
    second, _ = run_pipeline(seed)
    a, b = report_bytes(first), report_bytes(second)
    return {"bytes": len(a), "identical": a == b, "passed": a == b}


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


def summary_lines(reports: dict, timings: dict) -> list[str]:
    lines = []
    for k in sorted(reports):
        rt = timings.get(k)
        ok = reports[k]["passed"] and (rt is None or rt < RUNTIME_LIMITS[k])
        time_s = f"{rt:7.2f}s" if rt is not None else "       -"
        lines.append(f"criterion {k:2d} {'PASS' if ok else 'FAIL'} {time_s}  {NAMES[k]}")
    return lines
