import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from renvol import end_geometry as eg
from renvol import tensorfield as tf
from renvol.mesh import total_area


@pytest.fixture(scope="module")
def perturbed(fuchsian3, basis3):
    c = np.random.default_rng(11).normal(size=basis3.dimension)
    return eg.perturbed_data(fuchsian3, basis3, c / np.linalg.norm(c), 0.3)


def test_fuchsian_validates(fuchsian3):
    rep = fuchsian3.validate()
    assert rep["gauss_residual"] < 1e-8
    assert rep["codazzi_residual"] == 0.0
    assert rep["horizon"] is None


def test_tensor_curvature_matches_metric(octagon3, hyp3, fuchsian3):
    # I* = m / 2 has curvature -2 everywhere
    np.testing.assert_allclose(fuchsian3.K_star, -2.0, atol=1e-9)
    Kv, _ = eg.tensor_curvature(octagon3.mesh, hyp3, np.broadcast_to(np.eye(2), (
        octagon3.mesh.n_faces, 2, 2)))
    assert Kv.sum() * 0 == 0 and np.allclose(Kv, -1.0, atol=1e-9)


def test_tensor_gauss_bonnet(octagon3, hyp3):
    rng = np.random.default_rng(4)
    A = rng.uniform(-0.3, 0.3, size=(octagon3.mesh.n_faces, 2, 2))
    I = np.eye(2) + 0.5 * (A + np.swapaxes(A, 1, 2))
    Kv, Kf = eg.tensor_curvature(octagon3.mesh, hyp3, I)
    s = eg.tensor_area_weights(octagon3.mesh, hyp3, I)
    assert float(Kf @ s) == pytest.approx(-4 * math.pi, abs=1e-9)


def test_fuchsian_leaf_closed_form(fuchsian3):
    # I_r = cosh(r)^2 m, H = 2 tanh r
    for r in (0.3, 1.0, 2.5):
        lf = eg.leaf(fuchsian3, r)
        np.testing.assert_allclose(lf.H, 2 * math.tanh(r), rtol=1e-13)
        assert lf.area == pytest.approx(4 * math.pi * math.cosh(r) ** 2, rel=1e-9)


def test_relative_w_matches_closed_form(octagon3, hyp3, fuchsian3):
    area = total_area(octagon3.mesh, hyp3)
    for r0, r1 in ((0.5, 2.0), (1.0, 4.0), (3.0, 1.5)):
        assert eg.relative_w(fuchsian3, r0, r1) == pytest.approx(
            eg.fuchsian_relative_w(area, r0, r1), abs=1e-8)


def test_volume_between_independent_quadrature(perturbed):
    s, T, D = eg.leaf_area_coefficients(perturbed)

    def area(r):
        return float(np.sum(0.5 * s * (np.exp(2 * r) + T + np.exp(-2 * r) * D)))

    ref, _ = quad(area, 0.7, 2.9, epsabs=1e-12, epsrel=1e-13)
    assert eg.volume_between(perturbed, 0.7, 2.9) == pytest.approx(ref, rel=1e-11)


def test_slope_is_two_pi(fuchsian3, perturbed):
    for d in (fuchsian3, perturbed):
        sw = eg.sweep(d, np.arange(0.5, 4.01, 0.5))
        assert sw.slope == pytest.approx(2 * math.pi, abs=1e-6)
        assert sw.residual < 1e-8
        assert sw.slope_report()["matches"] == "-pi*chi"


def test_w_is_affine_exactly(perturbed):
    # the increment over a fixed r-step does not depend on where it starts
    a = eg.relative_w(perturbed, 1.0, 1.5)
    b = eg.relative_w(perturbed, 3.0, 3.5)
    assert a == pytest.approx(b, abs=1e-9)
    assert a == pytest.approx(0.5 * 2 * math.pi, abs=1e-8)


def test_perturbed_validation(perturbed):
    rep = perturbed.validate()
    assert rep["gauss_residual"] < 1e-9
    assert 0 < rep["codazzi_residual"] < eg.CODAZZI_TOL


def test_validation_rejects_gauss_violation(fuchsian3):
    bad = fuchsian3.with_fields(B_star=fuchsian3.B_star * 1.1)
    with pytest.raises(eg.DataError, match="Gauss"):
        bad.validate()


def test_validation_rejects_non_codazzi(fuchsian3):
    rng = np.random.default_rng(2)
    X = rng.normal(size=fuchsian3.B_star.shape)
    noise = tf.traceless_part(X + np.swapaxes(X, 1, 2))
    with pytest.raises(eg.DataError, match="Codazzi"):
        fuchsian3.with_fields(B_star=fuchsian3.B_star + 0.3 * noise).validate()


def test_rejects_non_self_adjoint(fuchsian3):
    B = fuchsian3.B_star.copy()
    B[:, 0, 1] += 0.5
    with pytest.raises(eg.DataError, match="self-adjoint"):
        fuchsian3.with_fields(B_star=B)


def test_rejects_indefinite_metric(fuchsian3):
    I = fuchsian3.I_star.copy()
    I[3] = np.diag([1.0, -1.0])
    with pytest.raises(eg.DataError, match="positive definite"):
        fuchsian3.with_fields(I_star=I)


def test_nonconvex_leaf_raises(fuchsian3):
    B = fuchsian3.B_star.copy()
    B[0] = np.diag([-3.0, 1.0])
    d = fuchsian3.with_fields(B_star=B)
    assert d.horizon() == pytest.approx(0.5 * math.log(3.0), abs=1e-3)
    with pytest.raises(eg.NonConvexLeafError):
        eg.leaf(d, 0.1)
    eg.leaf(d, 1.0)


@pytest.mark.parametrize("rho", [-0.5, 0.3, 1.0])
def test_scaling_reindexes_leaves(perturbed, rho):
    assert eg.leaf_reindexing_defect(perturbed, rho, 2.0) < 1e-12
    s = eg.scale_at_infinity(perturbed, rho)
    assert np.abs(s.gauss_residual() - perturbed.gauss_residual()).max() < 1e-10


def test_intercept_shift_sign(perturbed):
    radii = np.arange(1.5, 4.01, 0.5)
    a = eg.sweep(perturbed, radii, anchor=0.5)
    b = eg.sweep(eg.scale_at_infinity(perturbed, 0.3), radii, anchor=0.2)
    assert b.intercept - a.intercept == pytest.approx(a.slope * 0.3, rel=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.0, 2.0))
def test_nested_monotonicity(r0, dr):
    from renvol import conformal as cf
    from renvol import fixtures as fx
    f = fx.octagon_g2(2)
    d = eg.fuchsian_data(f.mesh, cf.hyperbolize(f.mesh, f.metric))
    rep = eg.nested_monotonicity_check(d, r0, r0 + dr)
    assert rep["passed"]


def test_nested_monotonicity_equality(fuchsian3):
    rep = eg.nested_monotonicity_check(fuchsian3, 1.0, 1.0)
    assert rep["equality_case"] and rep["value"] == 0.0 and rep["passed"]
    with pytest.raises(ValueError):
        eg.nested_monotonicity_check(fuchsian3, 2.0, 1.0)


def test_sweep_needs_two_radii(fuchsian3):
    with pytest.raises(ValueError):
        eg.sweep(fuchsian3, [1.0])


def test_quadrature_failure_reported(fuchsian3):
    with pytest.raises(eg.QuadratureError):
        eg.volume_between(fuchsian3, 0.0, 4.0, tol=1e-300)


def test_data_from_fields_roundtrip(octagon3, hyp3, perturbed):
    I, II = eg.data_to_dicts(perturbed)
    n = octagon3.mesh.n_faces
    d = eg.data_from_fields(octagon3.mesh, hyp3, tf.tensor_from_dict(I, n),
                            tf.tensor_from_dict(II, n), {"gauss_tol": 1e-5})
    assert d.gauss_tol == 1e-5
    np.testing.assert_allclose(d.B_star, perturbed.B_star, atol=1e-12)
    with pytest.raises(eg.DataError):
        eg.data_from_fields(octagon3.mesh, hyp3, d.I_star, d.II_star, {"gauss": 1.0})


def test_sweep_dict_has_conventions(fuchsian3):
    out = eg.sweep(fuchsian3, [0.5, 1.0, 1.5]).to_dict()
    assert out["conventions"] == eg.CONVENTIONS
    assert set(out["rows"][0]) == set(eg.FoliationSweep.HEADER)


def test_perturbation_keeps_relative_intercept(fuchsian3, perturbed):
    # W-relative only sees the integrated trace of B*, which Gauss-Bonnet fixes
    radii = np.arange(1.5, 4.01, 0.5)
    a = eg.sweep(fuchsian3, radii, anchor=0.5)
    b = eg.sweep(perturbed, radii, anchor=0.5)
    assert b.intercept == pytest.approx(a.intercept, rel=1e-8)
