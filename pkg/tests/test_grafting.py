import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from renvol import conformal as cf
from renvol import fixtures as fx
from renvol import grafting as gr
from renvol.mesh import angle_defect_curvature, total_area


@pytest.fixture(scope="module")
def spec3(octagon3, hyp3):
    return gr.shorten_to_geodesic(octagon3.mesh, hyp3, octagon3.tags["systole_loop"])


def test_systole_loop_is_geodesic(octagon3, spec3):
    systole = octagon3.tags["geometry"]["systole"]
    assert spec3.residual <= 1e-6
    assert spec3.length == pytest.approx(systole, rel=0.01)


def test_geodesic_returned_unchanged(octagon3, hyp3, spec3):
    again = gr.shorten_to_geodesic(octagon3.mesh, hyp3, spec3.loop)
    assert again.loop == spec3.loop and again.iterations == 0


def test_detour_is_shortened(octagon3, hyp3, spec3):
    # push one loop vertex off the geodesic through a neighbouring triangle
    loop = list(spec3.loop)
    mesh = octagon3.mesh
    a, b = loop[0], loop[1]
    f, k = mesh.halfedge_face[(a, b)] if (a, b) in mesh.halfedge_face \
        else mesh.halfedge_face[(b, a)]
    c = next(int(v) for v in mesh.faces[f] if v not in (a, b))
    detour = [loop[0], c] + loop[1:]
    out = gr.shorten_to_geodesic(mesh, hyp3, detour)
    assert out.residual <= 1e-6
    assert out.length <= gr.loop_length(mesh, hyp3, detour)
    assert out.length == pytest.approx(spec3.length, rel=0.01)


def test_contractible_loop_rejected(octagon3, hyp3):
    ring = [x[0] for x in gr._ring_neighbours(octagon3.mesh, 17)]
    with pytest.raises(gr.DegenerateLoopError):
        gr.shorten_to_geodesic(octagon3.mesh, hyp3, ring)


def test_non_simple_loop_rejected(octagon3, hyp3, spec3):
    loop = list(spec3.loop)
    with pytest.raises(gr.LoopError):
        gr.check_loop(octagon3.mesh, loop + loop[:1] + [loop[1]])
    with pytest.raises(gr.LoopError):
        gr.check_loop(octagon3.mesh, [0, 1])


def test_side_angles_sum_to_cone_angle(octagon3, hyp3, spec3):
    from renvol.mesh import angle_sums
    s = gr.side_angles(octagon3.mesh, hyp3, spec3.loop)
    np.testing.assert_allclose(s.sum(axis=1), angle_sums(octagon3.mesh, hyp3)[list(spec3.loop)],
                               atol=1e-12)


def test_w_zero_is_identity(octagon3, hyp3, spec3):
    res = gr.graft(octagon3.mesh, hyp3, replace(spec3, w=0.0))
    assert res.mesh is octagon3.mesh and res.metric is hyp3


@pytest.mark.parametrize("w", [0.1, 0.5, 1.0, 2.3])
def test_area_identity(octagon3, hyp3, spec3, w):
    res = gr.graft(octagon3.mesh, hyp3, replace(spec3, w=w))
    assert total_area(res.mesh, res.metric) == pytest.approx(
        total_area(octagon3.mesh, hyp3) + w * spec3.length, abs=1e-9)
    assert res.mesh.euler_characteristic == -2
    assert angle_defect_curvature(res.mesh, res.metric).sum() == pytest.approx(-4 * math.pi,
                                                                              abs=1e-9)


def test_curvature_strata(octagon3, hyp3, spec3):
    res = gr.graft(octagon3.mesh, hyp3, replace(spec3, w=0.6), columns=3)
    strata = gr.curvature_strata(res)
    assert abs(strata["strip"]["min"]) < 1e-10 and abs(strata["strip"]["max"]) < 1e-10
    assert strata["bulk"]["min"] == pytest.approx(-1, abs=1e-9)
    assert strata["bulk"]["max"] == pytest.approx(-1, abs=1e-9)
    assert -1 - 1e-9 <= strata["seam"]["min"] <= strata["seam"]["max"] <= 1e-9


def test_domination_and_monotonicity(octagon3, hyp3, spec3):
    rep = gr.monotonicity_probe(octagon3.mesh, hyp3, spec3, [0.1, 0.4])
    assert rep["passed"]
    small = gr.domination_check(gr.graft(octagon3.mesh, hyp3, replace(spec3, w=0.1)))
    assert small["passed"] and small["min_u"] >= -1e-5
    assert small["max_u"] < 0.1


def test_domination_w_zero(octagon3, hyp3, spec3):
    rep = gr.domination_check(gr.graft(octagon3.mesh, hyp3, replace(spec3, w=0.0)))
    assert abs(rep["min_u"]) < 1e-8 and abs(rep["max_u"]) < 1e-8


def test_normalization_correction():
    assert gr.normalization_correction(4 * math.pi, 4 * math.pi, -2) == pytest.approx(
        2 * math.pi * math.log(2), abs=1e-12)
    assert gr.normalization_correction(4 * math.pi, 0.0, -2) == 0.0
    with pytest.raises(ValueError):
        gr.normalization_correction(0.0, 1.0, -2)
    with pytest.raises(ValueError):
        gr.normalization_correction(1.0, -1.0, -2)


@given(st.floats(0.1, 100), st.floats(0, 100), st.integers(-20, -1))
def test_normalization_correction_nonnegative(area0, mass, chi):
    assert gr.normalization_correction(area0, mass, chi) >= 0


def test_is_contractible(octagon3, spec3):
    assert not gr.is_contractible(octagon3.mesh, spec3.loop)
    ring = [x[0] for x in gr._ring_neighbours(octagon3.mesh, 5)]
    assert gr.is_contractible(octagon3.mesh, ring)
