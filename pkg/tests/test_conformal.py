import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import approx_fprime

from renvol import conformal as cf
from renvol import fixtures as fx
from renvol.acceptance import smooth_fields
from renvol.mesh import dual_areas, total_area


def test_hyperbolized_curvature(octagon3, hyp3):
    K = cf.measured_curvature(octagon3.mesh, hyp3)
    np.testing.assert_allclose(K, -1.0, atol=1e-10)
    # Gauss-Bonnet then forces the area
    assert total_area(octagon3.mesh, hyp3) == pytest.approx(4 * math.pi, rel=1e-10)


def test_already_hyperbolic_gives_zero(octagon3, hyp3):
    u = cf.uniformize(octagon3.mesh, hyp3, tol=1e-12)
    assert np.abs(u).max() < 1e-10


@pytest.mark.parametrize("c", [0.5, 1.7, 3.0])
def test_constant_scaling(octagon3, hyp3, c):
    # scaling lengths by c multiplies every dual area by c^2 and fixes the angles,
    # so the factor is exactly -log c
    u = cf.uniformize(octagon3.mesh, hyp3.scaled(c), tol=1e-12)
    np.testing.assert_allclose(u, -math.log(c), atol=1e-10)


def test_round_trip_smooth(octagon3, hyp3):
    rng = np.random.default_rng(3)
    for v in smooth_fields(octagon3.mesh, hyp3, 3, rng):
        m = cf.conformal_scale(octagon3.mesh, hyp3, v)
        u = cf.uniformize(octagon3.mesh, m, tol=1e-12)
        assert np.abs(u + v).max() < 1e-8


def test_jacobian_matches_finite_differences(octagon2):
    mesh, metric = octagon2.mesh, octagon2.metric
    rng = np.random.default_rng(0)
    u0 = rng.uniform(-0.02, 0.02, mesh.n_vertices)
    J = cf._jacobian(mesh, cf.conformal_scale(mesh, metric, u0)).toarray()
    for i in rng.choice(mesh.n_vertices, 5, replace=False):
        def fi(u, i=i):
            return cf._residual(mesh, cf.conformal_scale(mesh, metric, u))[i]
        g = approx_fprime(u0, fi, 1e-7)
        np.testing.assert_allclose(J[i], g, atol=2e-6)


def test_linear_curvature_formula_first_order(octagon3, hyp3):
    # exp(-2u)(K + Delta u) agrees with the measured curvature up to O(|u|^2) and h
    v = smooth_fields(octagon3.mesh, hyp3, 1, np.random.default_rng(5), amplitude=0.05)[0]
    pred = cf.curvature_after_conformal(octagon3.mesh, hyp3, v)
    meas = cf.measured_curvature(octagon3.mesh, cf.conformal_scale(octagon3.mesh, hyp3, v))
    base = np.abs(meas + 1).max()
    assert np.abs(pred - meas).max() < 0.2 * base


def test_comparison_lemma_on_scalings(octagon3, hyp3):
    rep = cf.check_comparison_lemma(octagon3.mesh, hyp3.scaled(1.3))
    assert rep["hypothesis_held"] and rep["passed"]
    assert rep["min_u"] == pytest.approx(math.log(1.3), abs=1e-7)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_comparison_lemma_property(seed):
    # curvature >= -1 everywhere implies u >= 0; otherwise the check is vacuous
    f = fx.octagon_g2(2)
    hyp = cf.hyperbolize(f.mesh, f.metric)
    rng = np.random.default_rng(seed)
    v = smooth_fields(f.mesh, hyp, 1, rng, modes=6, amplitude=0.3)[0]
    m = cf.conformal_scale(f.mesh, hyp, v + abs(rng.normal()))
    rep = cf.check_comparison_lemma(f.mesh, m)
    assert rep["passed"]


def test_rejects_nonnegative_euler_characteristic():
    f = fx.flat_torus()
    with pytest.raises(ValueError):
        cf.uniformize(f.mesh, f.metric)


def test_conformal_scale_validates(octagon2):
    with pytest.raises(ValueError):
        cf.conformal_scale(octagon2.mesh, octagon2.metric, np.zeros(3))
    with pytest.raises(ValueError):
        cf.conformal_scale(octagon2.mesh, octagon2.metric,
                           np.full(octagon2.mesh.n_vertices, np.nan))


def test_nonconvergence_raises(octagon3):
    with pytest.raises(cf.ConvergenceError) as err:
        cf.uniformize(octagon3.mesh, octagon3.metric, tol=1e-12, max_iter=1)
    assert len(err.value.history) >= 1


def test_newton_converges_quadratically(octagon3):
    rep = cf.NewtonReport()
    cf.uniformize(octagon3.mesh, octagon3.metric.scaled(2.0), tol=1e-12, report=rep)
    assert rep.converged and rep.iterations <= 10
    r = rep.residuals
    assert r[-1] < 1e-12


def test_dual_area_weighted_residual_sums(octagon3, hyp3):
    # integrated residual defect + A vanishes vertex by vertex for the hyperbolic metric
    res = cf._residual(octagon3.mesh, hyp3)
    assert np.abs(res).max() < 1e-10 * dual_areas(octagon3.mesh, hyp3).max()
