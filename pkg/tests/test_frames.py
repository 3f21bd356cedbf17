"""Rotation, vectorization, and lever-arm oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toapose.frames import (
    Attitude,
    Pose,
    antenna_position,
    kronecker_row,
    rotation_matrix,
    rotation_yaw_derivative,
    vectorize_rotation,
    wrap_angle,
)

angles = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
small_angles = st.floats(min_value=-0.5, max_value=0.5, allow_nan=False)
coords = st.floats(min_value=-100.0, max_value=100.0, allow_nan=False)


def test_rotation_at_zero_attitude():
    R = rotation_matrix(Attitude(0.0))
    np.testing.assert_allclose(R, np.diag([1.0, -1.0, -1.0]), atol=1e-15)


def test_rotation_at_quarter_turn():
    R = rotation_matrix(Attitude(math.pi / 2))
    expected = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    np.testing.assert_allclose(R, expected, atol=1e-15)


@given(psi=angles, gam=small_angles, phi=small_angles)
def test_rotation_is_special_orthogonal(psi, gam, phi):
    R = rotation_matrix(Attitude(psi, gam, phi))
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(R) - 1.0) < 1e-12


def test_vectorization_unit_u_and_trivial_angles():
    v0 = vectorize_rotation(Attitude(0.0))
    np.testing.assert_allclose(v0.u, [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(v0.vec(), rotation_matrix(Attitude(0.0)).flatten(order="F"), atol=1e-15)

    v1 = vectorize_rotation(Attitude(math.pi / 2))
    np.testing.assert_allclose(v1.u, [1.0, 0.0], atol=1e-15)


@given(psi=angles, gam=small_angles, phi=small_angles)
@settings(max_examples=200)
def test_vectorization_matches_direct_rotation(psi, gam, phi):
    att = Attitude(psi, gam, phi)
    v = vectorize_rotation(att)
    assert abs(np.linalg.norm(v.u) - 1.0) < 1e-12
    vec_direct = rotation_matrix(att).flatten(order="F")
    assert np.max(np.abs(v.vec() - vec_direct)) < 1e-12


@given(psi=angles, gam=small_angles, phi=small_angles)
def test_yaw_derivative_matches_central_difference(psi, gam, phi):
    att = Attitude(psi, gam, phi)
    step = 1e-6
    numeric = (
        rotation_matrix(Attitude(psi + step, gam, phi)) - rotation_matrix(Attitude(psi - step, gam, phi))
    ) / (2 * step)
    np.testing.assert_allclose(rotation_yaw_derivative(att), numeric, atol=1e-8)


def test_antenna_position_quarter_turn_example():
    pose = Pose(10.0, 5.0, Attitude(math.pi / 2), h=0.0)
    np.testing.assert_allclose(antenna_position(pose, [4.0, 2.0, 0.0]), [12.0, 9.0, 0.0], atol=1e-12)


def test_antenna_position_zero_lever_is_center():
    pose = Pose(3.0, -7.0, Attitude(1.1), h=2.0)
    np.testing.assert_allclose(antenna_position(pose, [0.0, 0.0, 0.0]), pose.center, atol=1e-15)


def test_antenna_position_hand_evaluated_pose():
    # Frozen scalar-trig evaluation: x + 4 cos(0.74) - 2 sin(0.74),
    # y + 4 sin(0.74) + 2 cos(0.74), both at h = 0.
    pose = Pose(11.24, -9.29, Attitude(0.74), h=0.0)
    got = antenna_position(pose, [4.0, -2.0, 0.0])
    np.testing.assert_allclose(got, [12.845298411662062, -5.115911236028243, 0.0], atol=1e-12)


def test_kronecker_row_selects_single_entries():
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 1.0, 0.0])
    row = kronecker_row(e1, e1)
    expected = np.zeros(9)
    expected[0] = 1.0  # R[0, 0] in column-stacked order
    np.testing.assert_array_equal(row, expected)

    row21 = kronecker_row(e1, e2)
    expected21 = np.zeros(9)
    expected21[1] = 1.0  # R[1, 0]
    np.testing.assert_array_equal(row21, expected21)


@given(
    psi=angles,
    l=st.lists(coords, min_size=3, max_size=3),
    p=st.lists(coords, min_size=3, max_size=3),
)
def test_kronecker_row_reproduces_bilinear_form(psi, l, p):
    att = Attitude(psi)
    l = np.array(l)
    p = np.array(p)
    direct = p @ rotation_matrix(att) @ l
    via_vec = kronecker_row(l, p) @ vectorize_rotation(att).vec()
    assert abs(direct - via_vec) < 1e-9 * max(1.0, abs(direct))


@given(psi=angles, delta=angles)
def test_pairwise_antenna_distances_invariant_under_yaw(psi, delta):
    levers = [np.array([4.0, -2.0, 0.0]), np.array([4.0, 2.0, 0.0]), np.array([-4.0, 0.0, 0.0])]
    pose_a = Pose(1.0, 2.0, Attitude(psi))
    pose_b = Pose(1.0, 2.0, Attitude(psi + delta))
    pos_a = [antenna_position(pose_a, l) for l in levers]
    pos_b = [antenna_position(pose_b, l) for l in levers]
    for i in range(3):
        for j in range(i + 1, 3):
            da = np.linalg.norm(pos_a[i] - pos_a[j])
            db = np.linalg.norm(pos_b[i] - pos_b[j])
            assert abs(da - db) < 1e-9


@pytest.mark.parametrize(
    "raw, expected",
    [
        (0.0, 0.0),
        (math.pi, math.pi),
        (-math.pi, math.pi),
        (3 * math.pi, math.pi),
        (2 * math.pi, 0.0),
        (-0.5, -0.5),
    ],
)
def test_wrap_angle_half_open_interval(raw, expected):
    assert wrap_angle(raw) == pytest.approx(expected, abs=1e-12)
    assert -math.pi < wrap_angle(raw) <= math.pi


@given(a=st.floats(min_value=-50.0, max_value=50.0, allow_nan=False))
def test_wrap_angle_preserves_direction(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert abs(math.sin(w) - math.sin(a)) < 1e-9
    assert abs(math.cos(w) - math.cos(a)) < 1e-9


def test_attitude_rejects_non_finite():
    with pytest.raises(ValueError):
        Attitude(float("nan"))
    with pytest.raises(ValueError):
        Pose(float("inf"), 0.0, Attitude(0.0))
