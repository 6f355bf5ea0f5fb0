import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from renvol import fixtures as fx
from renvol import tensorfield as tf
from renvol.mesh import face_areas, total_area

finite = st.floats(-1e3, 1e3, allow_nan=False)


def torus_face_rotations(n):
    """Angle of each face frame's x-axis in the global chart of the flat torus."""
    f = fx.flat_torus(n)
    F = f.mesh.faces
    xy = np.stack(np.divmod(np.arange(n * n), n), 1) / n
    d = xy[F[:, 1]] - xy[F[:, 0]]
    d = (d + 0.5) % 1.0 - 0.5
    return f, np.arctan2(d[:, 1], d[:, 0])


def to_face_frames(B_glob, theta):
    c, s = np.cos(theta), np.sin(theta)
    R = np.stack([c, -s, s, c], 1).reshape(-1, 2, 2)
    return np.swapaxes(R, 1, 2) @ B_glob @ R


@given(arrays(np.float64, (5, 3), elements=finite))
def test_abc_roundtrip(abc):
    np.testing.assert_array_equal(tf.abc_from_sym(tf.sym_from_abc(abc)), abc)


@given(arrays(np.float64, (4, 3), elements=finite))
def test_traceless_part(abc):
    T = tf.traceless_part(tf.sym_from_abc(abc))
    np.testing.assert_allclose(T[:, 0, 0] + T[:, 1, 1], 0, atol=1e-9)


@given(arrays(np.float64, (6, 2), elements=finite))
def test_quad_roundtrip(x):
    q = x[:, 0] + 1j * x[:, 1]
    T = tf.traceless_from_quad(q)
    np.testing.assert_allclose(tf.quad_from_traceless(T), q, rtol=0, atol=1e-12)
    # T = -Re q in the orthonormal frame
    np.testing.assert_allclose(T[:, 0, 0], -q.real, atol=1e-12)


def test_qd_norms_constant(octagon3, hyp3):
    q = np.full(octagon3.mesh.n_faces, 0.3 - 0.4j)
    n = tf.qd_norms(octagon3.mesh, hyp3, q)
    assert n["linf"] == pytest.approx(0.5, abs=1e-15)
    assert n["l2"] == pytest.approx(0.5 * math.sqrt(total_area(octagon3.mesh, hyp3)), rel=1e-13)


def test_identity_is_codazzi(octagon3, hyp3):
    res = tf.codazzi_residual(octagon3.mesh, hyp3, tf.identity_field(octagon3.mesh.n_faces, 0.7))
    assert np.abs(res).max() == 0.0


def test_constant_traceless_on_flat_torus_is_codazzi():
    # parallel tensors on a flat surface: the discrete transport is exact
    f, theta = torus_face_rotations(8)
    B = np.broadcast_to(np.array([[0.3, 0.8], [0.8, -0.3]]), (f.mesh.n_faces, 2, 2))
    Bf = to_face_frames(B, theta)
    res = tf.codazzi_residual(f.mesh, f.metric, Bf)
    assert np.abs(res).max() < 1e-12


def test_flat_torus_kernel_dimension():
    # holomorphic quadratic differentials on a torus: one complex dimension
    f = fx.flat_torus(8)
    basis = tf.codazzi_basis(f.mesh, f.metric)
    assert basis.dimension == 2
    assert basis.gap_ratio > 10


@pytest.mark.parametrize("level", [2, 3])
def test_genus2_kernel_dimension(level, request):
    f = fx.octagon_g2(level)
    hyp = request.getfixturevalue("hyp2" if level == 2 else "hyp3")
    sv = tf.smallest_singular_values(f.mesh, hyp)
    dim, ratio = tf.spectral_gap(sv)
    assert dim == 6 and ratio >= tf.GAP_RATIO_MIN


def test_basis_properties(octagon3, hyp3, basis3):
    op, mass, layout = tf.codazzi_operator(octagon3.mesh, hyp3)
    X = basis3.nodal.reshape(basis3.dimension, -1)
    gram = X @ (mass @ X.T)
    np.testing.assert_allclose(gram, np.eye(basis3.dimension), atol=1e-8)
    # fields are traceless and their nodal Codazzi residual is far below a random field's
    tr = basis3.fields[:, :, 0, 0] + basis3.fields[:, :, 1, 1]
    assert np.abs(tr).max() < 1e-12
    rnd = np.random.default_rng(0).normal(size=(octagon3.mesh.n_faces, 2, 2))
    rnd = tf.traceless_part(rnd + np.swapaxes(rnd, 1, 2))
    r_rand = np.linalg.norm(tf.codazzi_residual(octagon3.mesh, hyp3, rnd)) \
        / tf.field_norm(octagon3.mesh, hyp3, rnd)
    for B, nodal in zip(basis3.fields, basis3.nodal):
        r = np.linalg.norm(tf.codazzi_residual(octagon3.mesh, hyp3, None, layout=basis3.layout,
                                               nodal=nodal))
        assert r < 0.05
        assert np.linalg.norm(tf.codazzi_residual(octagon3.mesh, hyp3, B)) \
            / tf.field_norm(octagon3.mesh, hyp3, B) < 0.2 * r_rand


def test_basis_residual_decreases_with_refinement(octagon2, hyp2, octagon3, hyp3, basis3):
    b2 = tf.codazzi_basis(octagon2.mesh, hyp2)

    def worst(mesh, metric, b):
        return max(np.linalg.norm(tf.codazzi_residual(mesh, metric, None, layout=b.layout,
                                                      nodal=x)) for x in b.nodal)

    assert worst(octagon3.mesh, hyp3, basis3) < 0.6 * worst(octagon2.mesh, hyp2, b2)


def test_degenerate_gap_raises(octagon2, hyp2):
    with pytest.raises(tf.DegenerateKernelError) as err:
        tf.codazzi_basis(octagon2.mesh, hyp2, min_ratio=1e6)
    assert err.value.singular_values.size == tf.N_PROBE


def test_lift_roundtrip_of_smooth_field(octagon3, hyp3, basis3):
    # nodes -> faces -> nodes -> faces approximately reproduces a kernel field
    B = basis3.fields[0]
    nodal, layout = tf.faces_to_nodes(octagon3.mesh, hyp3, B)
    again = tf.nodes_to_faces(layout, nodal)
    err = tf.field_norm(octagon3.mesh, hyp3, again - B) / tf.field_norm(octagon3.mesh, hyp3, B)
    assert err < 0.1


def test_constant_trace_exact_under_lift(octagon3, hyp3):
    B = tf.identity_field(octagon3.mesh.n_faces, 1.25)
    nodal, layout = tf.faces_to_nodes(octagon3.mesh, hyp3, B)
    np.testing.assert_array_equal(tf.nodes_to_faces(layout, nodal), B)


def test_self_adjointness():
    I = np.array([[[2.0, 0.5], [0.5, 1.0]]])
    II = np.array([[[1.0, 0.2], [0.2, -0.5]]])
    B = np.linalg.solve(I, II)
    assert tf.self_adjointness_residual(I, B)[0] < 1e-15
    assert tf.self_adjointness_residual(I, np.array([[[0.0, 1.0], [0.0, 0.0]]]))[0] > 0.1


def test_tensor_dict_roundtrip():
    S = tf.sym_from_abc(np.random.default_rng(0).normal(size=(4, 3)))
    np.testing.assert_array_equal(tf.tensor_from_dict(tf.tensor_to_dict(S), 4), S)
    with pytest.raises(ValueError):
        tf.tensor_from_dict(tf.tensor_to_dict(S), 5)
    q = np.array([1 + 2j, -0.5j])
    np.testing.assert_array_equal(tf.quad_from_dict(tf.quad_to_dict(q), 2), q)


def test_field_norm(octagon2, hyp2):
    S = tf.identity_field(octagon2.mesh.n_faces)
    A = face_areas(octagon2.mesh, hyp2).sum()
    assert tf.field_norm(octagon2.mesh, hyp2, S) == pytest.approx(math.sqrt(2 * A))
