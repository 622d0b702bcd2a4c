import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphere_ot.exceptions import AntipodalPoint, OutOfChart, ZeroVector
from sphere_ot.geometry import (
    SpherePoint,
    TangentVector,
    closest_point,
    exp_map,
    geodesic_distance,
    inverse_normal_coords,
    log_map,
    normal_coords,
    project_tangent,
    random_sphere_points,
    tangent_frame,
)

unit = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_distance_known_values():
    e = np.eye(3)
    assert geodesic_distance(e[0], e[1]) == pytest.approx(np.pi / 2)
    assert geodesic_distance(e[0], -e[0]) == pytest.approx(np.pi)
    assert geodesic_distance(e[2], e[2]) == 0.0


def test_distance_small_angle_keeps_relative_accuracy():
    t = 1e-9
    y = np.array([np.cos(t), np.sin(t), 0.0])
    assert geodesic_distance([1.0, 0, 0], y) == pytest.approx(t, rel=1e-6)


def test_normal_coords_example():
    v = normal_coords([0, 0, 1.0], [1.0, 0, 0])
    np.testing.assert_allclose(v, [np.pi / 2, 0, 1], atol=1e-15)


def test_normal_coords_antipode_raises():
    with pytest.raises(AntipodalPoint):
        normal_coords([0, 0, 1.0], [0, 0, -1.0])


def test_inverse_normal_coords_out_of_chart():
    with pytest.raises(OutOfChart):
        inverse_normal_coords([0, 0, 1.0], [3.5, 0, 1.0])


def test_zero_vector_rejected():
    with pytest.raises(ZeroVector):
        SpherePoint([0, 0, 0])
    with pytest.raises(ZeroVector):
        closest_point([0.0, 0.0, 0.0])


def test_tangent_vector_projects_out_normal():
    t = TangentVector(SpherePoint([0, 0, 2.0]), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(t.vec, [1, 2, 0])
    assert t.norm == pytest.approx(np.sqrt(5))
    np.testing.assert_allclose(exp_map(t, None), exp_map([0, 0, 1.0], [1.0, 2.0, 0]))


def test_frame_is_right_handed_orthonormal(rng):
    x = random_sphere_points(1000, rng)
    e1, e2 = tangent_frame(x)
    M = np.stack([x, e1, e2], axis=1)
    np.testing.assert_allclose(np.einsum("nij,nkj->nik", M, M), np.broadcast_to(np.eye(3), (1000, 3, 3)),
                               atol=1e-14)
    np.testing.assert_allclose(np.linalg.det(M), 1.0, atol=1e-14)
    frame = tangent_frame(SpherePoint([0.3, -0.2, 0.9]))
    assert frame.matrix().shape == (2, 3)


def test_normal_coords_vectorized_identities(rng):
    x0 = random_sphere_points(20000, rng)
    x = random_sphere_points(20000, rng)
    d = geodesic_distance(x0, x)
    keep = d < np.pi - 1e-6
    v = normal_coords(x0[keep], x[keep]) - x0[keep]
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), d[keep], atol=1e-10)
    assert np.max(np.abs(np.einsum("ij,ij->i", v, x0[keep]))) < 1e-10


@settings(max_examples=300, deadline=None)
@given(unit, unit)
def test_exp_log_round_trip(a, b):
    x0, x = _unit(a), _unit(b)
    if geodesic_distance(x0, x) > np.pi - 1e-3:
        return
    back = exp_map(x0, log_map(x0, x))
    np.testing.assert_allclose(back, x, atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(unit, st.floats(0, 3.0), st.floats(0, 2 * np.pi))
def test_log_exp_round_trip(a, radius, angle):
    x0 = _unit(a)
    e1, e2 = tangent_frame(x0)
    p = radius * (np.cos(angle) * e1 + np.sin(angle) * e2)
    np.testing.assert_allclose(log_map(x0, exp_map(x0, p)), p, atol=1e-10)
    assert geodesic_distance(x0, exp_map(x0, p)) == pytest.approx(radius, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(unit, unit)
def test_distance_symmetric_and_bounded(a, b):
    x, y = _unit(a), _unit(b)
    d = geodesic_distance(x, y)
    assert 0 <= d <= np.pi
    assert d == geodesic_distance(y, x)
    # chord relation
    assert 2 * np.sin(d / 2) == pytest.approx(np.linalg.norm(x - y), abs=1e-14)


def test_series_branch_matches_direct_branch():
    x0 = np.array([0.0, 0.0, 1.0])
    for t in (5e-5, 1.5e-4):
        x = np.array([np.sin(t), 0.0, np.cos(t)])
        np.testing.assert_allclose(log_map(x0, x), [t, 0, 0], atol=1e-18, rtol=1e-12)


def test_project_tangent(rng):
    x = random_sphere_points(10, rng)
    v = project_tangent(x, rng.standard_normal((10, 3)))
    assert np.max(np.abs(np.einsum("ij,ij->i", x, v))) < 1e-15
