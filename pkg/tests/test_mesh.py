import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renvol import fixtures as fx
from renvol.mesh import (DiscreteMetric, Mesh, MeshError, MetricError, angle_defect_curvature,
                         corner_angles, cotan_laplacian, dual_areas, face_areas, face_frames,
                         integrate, load_mesh, mesh_from_dict, mesh_to_dict, save_mesh,
                         total_area)


def single_triangle(a, b, c):
    mesh = Mesh(np.array([[0, 1, 2]]), 3, allow_boundary=True)
    lengths = {tuple(e): None for e in mesh.edges.tolist()}
    # directed edge k of the face runs v_k -> v_{k+1}
    by_pair = {(0, 1): a, (1, 2): b, (0, 2): c}
    return mesh, DiscreteMetric(np.array([by_pair[tuple(e)] for e in lengths]))


def test_equilateral_angles_and_area():
    mesh, metric = single_triangle(1.0, 1.0, 1.0)
    np.testing.assert_allclose(corner_angles(mesh, metric), math.pi / 3, atol=1e-15)
    assert face_areas(mesh, metric)[0] == pytest.approx(math.sqrt(3) / 4, abs=1e-15)


def test_right_triangle_frame():
    # edge 0 = 3, edge 1 = 5 (hypotenuse), edge 2 = 4: right angle at v1? no, at v0
    mesh, metric = single_triangle(3.0, 5.0, 4.0)
    ang = corner_angles(mesh, metric)
    assert ang[0, 0] == pytest.approx(math.pi / 2, abs=1e-14)
    P = face_frames(mesh, metric)[0]
    np.testing.assert_allclose(P, [[0, 0], [3, 0], [0, 4]], atol=1e-14)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.05, 0.95))
def test_angle_sum_is_pi(a, b, t):
    c = abs(a - b) + t * (a + b - abs(a - b))
    mesh, metric = single_triangle(a, b, c)
    assert corner_angles(mesh, metric).sum() == pytest.approx(math.pi, abs=1e-12)


def test_triangle_inequality_rejected():
    mesh, metric = single_triangle(1.0, 1.0, 2.5)
    with pytest.raises(MetricError):
        face_areas(mesh, metric)


def test_inconsistent_orientation_rejected():
    with pytest.raises(MeshError):
        Mesh(np.array([[0, 1, 2], [0, 1, 3]]), 4, allow_boundary=True)


def test_open_mesh_rejected_without_flag():
    with pytest.raises(MeshError):
        Mesh(np.array([[0, 1, 2]]), 3)


def test_genus_mismatch_rejected():
    f = fx.tetrahedron()
    with pytest.raises(MeshError):
        Mesh(f.mesh.faces, 4, genus=1)


@pytest.mark.parametrize("name", ["flat_torus", "tetrahedron", "octagon_g2", "polygon_g3"])
def test_gauss_bonnet(name):
    f = fx.make_fixture(name)
    total = angle_defect_curvature(f.mesh, f.metric).sum()
    assert total == pytest.approx(2 * math.pi * f.mesh.euler_characteristic, abs=1e-9)


def test_flat_torus_defects_zero():
    f = fx.flat_torus(6)
    assert np.abs(angle_defect_curvature(f.mesh, f.metric)).max() < 1e-12


def test_tetrahedron_defects():
    f = fx.tetrahedron()
    np.testing.assert_allclose(angle_defect_curvature(f.mesh, f.metric), math.pi, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gauss_bonnet_under_random_lengths(seed):
    f = fx.octagon_g2(2)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.03, 0.03, f.mesh.n_vertices)
    e = f.mesh.edges
    metric = DiscreteMetric(f.metric.lengths * np.exp(0.5 * (u[e[:, 0]] + u[e[:, 1]])))
    assert angle_defect_curvature(f.mesh, metric).sum() == pytest.approx(-4 * math.pi, abs=1e-9)


def test_octagon_area_converges(octagon3):
    # the refined chart triangles approach the hyperbolic area 4 pi at second order
    errs = [abs(total_area(f.mesh, f.metric) - 4 * math.pi)
            for f in (fx.octagon_g2(2), octagon3)]
    assert errs[1] < errs[0] / 3.5


def test_octagon_default_area():
    f = fx.octagon_g2()
    assert abs(total_area(f.mesh, f.metric) / (4 * math.pi) - 1) < 5e-3


def test_disk_boundary_length():
    f = fx.make_fixture("disk_k", k=1.0, radius=2.0)
    mesh, metric = f.mesh, f.metric
    b = set(mesh.boundary_vertices.tolist())
    L = sum(l for (i, j), l in zip(mesh.edges.tolist(), metric.lengths) if i in b and j in b)
    assert L == pytest.approx(2 * math.pi * math.sinh(2.0), rel=5e-3)


def test_disk_area_model():
    f = fx.geodesic_disk(1.0, 1.5)
    assert total_area(f.mesh, f.metric) == pytest.approx(fx.model_area(1.0, 1.5), rel=5e-3)


def test_laplacian_structure(octagon3):
    L = cotan_laplacian(octagon3.mesh, octagon3.metric)
    assert abs(L - L.T).max() < 1e-14
    np.testing.assert_allclose(L @ np.ones(octagon3.mesh.n_vertices), 0, atol=1e-12)
    x = np.random.default_rng(1).normal(size=octagon3.mesh.n_vertices)
    assert x @ (L @ x) < 0


def test_torus_laplacian_eigenfunction():
    # cos(2 pi x) on the unit torus is an eigenfunction of div grad with eigenvalue -(2 pi)^2
    n = 32
    f = fx.flat_torus(n)
    x = (np.arange(n * n) // n) / n
    u = np.cos(2 * np.pi * x)
    Lu = (cotan_laplacian(f.mesh, f.metric) @ u) / dual_areas(f.mesh, f.metric)
    np.testing.assert_allclose(Lu, -(2 * np.pi) ** 2 * u, atol=0.02 * (2 * np.pi) ** 2)


def test_integrate_vertex_and_face(octagon3):
    m, g = octagon3.mesh, octagon3.metric
    area = total_area(m, g)
    assert integrate(m, g, np.ones(m.n_vertices)) == pytest.approx(area, rel=1e-14)
    assert integrate(m, g, np.ones(m.n_faces)) == pytest.approx(area, rel=1e-14)
    with pytest.raises(ValueError):
        integrate(m, g, np.ones(7))


def test_roundtrip(tmp_path, octagon2):
    p = tmp_path / "m.json"
    save_mesh(p, octagon2.mesh, octagon2.metric)
    mesh, metric = load_mesh(p)
    np.testing.assert_array_equal(mesh.faces, octagon2.mesh.faces)
    np.testing.assert_array_equal(metric.lengths, octagon2.metric.lengths)
    assert mesh.genus == 2


def test_missing_edge_length():
    f = fx.tetrahedron()
    d = mesh_to_dict(f.mesh, f.metric)
    d["edge_lengths"].pop(next(iter(d["edge_lengths"])))
    with pytest.raises(MeshError):
        mesh_from_dict(json.loads(json.dumps(d)))


def test_unknown_fixture():
    with pytest.raises(ValueError):
        fx.make_fixture("klein_bottle")


def test_systole_loop_is_closed_edge_path():
    f = fx.octagon_g2(3)
    loop = f.tags["systole_loop"]
    he = f.mesh.halfedge_face
    assert len(set(loop)) == len(loop)
    for a, b in zip(loop, loop[1:] + loop[:1]):
        assert (a, b) in he or (b, a) in he


def test_polygon_geometry_bolza():
    g = fx.polygon_geometry(2)
    # Bolza surface systole: 2 arccosh(1 + sqrt 2)
    assert g["systole"] == pytest.approx(2 * math.acosh(1 + math.sqrt(2)), abs=1e-12)
    assert g["angle"] == pytest.approx(math.pi / 4)
