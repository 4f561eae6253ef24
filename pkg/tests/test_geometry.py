import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saltolab.geometry import (LegGeometry, OutOfReach, TrunkPose, TrunkVelocity, body_to_world,
                               forward_kinematics, inverse_kinematics, leg_jacobian, rotation,
                               world_foot_velocity)

GEOM = LegGeometry(l1=0.2, l2=0.2, hip_offset_x=0.0)
angles = st.floats(-math.pi, math.pi, allow_nan=False)


@pytest.mark.parametrize("q, expected", [
    ((0.0, 0.0), (0.0, -0.4)),
    ((math.pi / 2, 0.0), (0.4, 0.0)),
    ((0.0, math.pi / 2), (0.2, -0.2)),
])
def test_forward_kinematics_examples(q, expected):
    np.testing.assert_allclose(forward_kinematics(q, GEOM), expected, atol=1e-12)


def test_inverse_kinematics_examples():
    np.testing.assert_allclose(inverse_kinematics((0.2, -0.2), GEOM), (0.0, math.pi / 2), atol=1e-12)
    with pytest.raises(OutOfReach):
        inverse_kinematics((0.0, -0.5), GEOM)


def test_full_extension_needs_clamp():
    # exactly l1 + l2 sits on the reach boundary and is refused
    with pytest.raises(OutOfReach):
        inverse_kinematics((0.0, -0.4), GEOM)


def test_jacobian_examples():
    np.testing.assert_allclose(leg_jacobian((0.0, 0.0), GEOM), [[0.4, 0.2], [0.0, 0.0]], atol=1e-12)
    np.testing.assert_allclose(leg_jacobian((math.pi / 2, 0.0), GEOM), [[0.0, 0.0], [0.4, 0.2]], atol=1e-12)


def test_body_to_world_examples():
    np.testing.assert_allclose(body_to_world((0.1, -0.3), TrunkPose(np.array([1.0, 0.3]), 0.0)), (1.1, 0.0),
                               atol=1e-12)
    np.testing.assert_allclose(body_to_world((0.1, -0.3), TrunkPose(np.array([1.0, 0.3]), math.pi / 2)),
                               (1.3, 0.4), atol=1e-12)


def test_world_foot_velocity_examples():
    pose = TrunkPose(np.zeros(2), 0.0)
    zero = TrunkVelocity(np.zeros(2), 0.0)
    np.testing.assert_allclose(world_foot_velocity((0, 0), (0.2, -0.3), pose, zero), (0, 0))
    v = world_foot_velocity((-1.0, 0.0), (0.2, -0.3), pose, TrunkVelocity(np.array([1.0, 0.0]), 0.0))
    np.testing.assert_allclose(v, (0, 0), atol=1e-15)
    v = world_foot_velocity((0, 0), (0.2, -0.3), pose, TrunkVelocity(np.zeros(2), 1.0))
    np.testing.assert_allclose(v, (0.3, 0.2), atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(q1=angles, q2=st.floats(1e-2, math.pi - 1e-2))
def test_ik_inverts_fk(q1, q2):
    q = inverse_kinematics(forward_kinematics((q1, q2), GEOM), GEOM)
    assert abs(q[1] - q2) < 1e-9
    assert abs(math.remainder(q[0] - q1, 2 * math.pi)) < 1e-9


@settings(max_examples=200, deadline=None)
@given(q1=angles, q2=angles)
def test_jacobian_matches_central_differences(q1, q2):
    h = 1e-6
    J = leg_jacobian((q1, q2), GEOM)
    fd = np.column_stack([(forward_kinematics(np.add((q1, q2), e), GEOM)
                           - forward_kinematics(np.subtract((q1, q2), e), GEOM)) / (2 * h)
                          for e in (np.array([h, 0.0]), np.array([0.0, h]))])
    assert np.linalg.norm(J - fd) <= 1e-5 * max(np.linalg.norm(J), 1e-3)


@given(theta=st.floats(-10, 10, allow_nan=False))
def test_rotation_is_orthonormal(theta):
    R = rotation(theta)
    np.testing.assert_allclose(R @ R.T, np.eye(2), atol=1e-12)


def test_velocity_is_derivative_of_position():
    # smooth trunk and foot motion; finite difference of body_to_world vs the closed form
    dt = 1e-5
    def pose(t):
        return TrunkPose(np.array([0.3 * t, 0.3 + 0.05 * math.sin(3 * t)]), 0.4 * math.sin(2 * t))
    def foot(t):
        return np.array([0.19 + 0.05 * math.cos(5 * t), -0.28 + 0.03 * t])
    for t in (0.1, 0.7, 1.3):
        fd = (body_to_world(foot(t + dt), pose(t + dt)) - body_to_world(foot(t - dt), pose(t - dt))) / (2 * dt)
        vel = TrunkVelocity(np.array([0.3, 0.15 * math.cos(3 * t)]), 0.8 * math.cos(2 * t))
        v_foot_B = np.array([-0.25 * math.sin(5 * t), 0.03])
        v = world_foot_velocity(v_foot_B, foot(t), pose(t), vel)
        assert np.linalg.norm(v - fd) < 1e-3 * np.linalg.norm(v)
