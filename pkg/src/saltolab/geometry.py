"""Planar leg kinematics and trunk frame transforms.

Conventions: x forward, z up, pitch positive nose-up (counterclockwise when
viewed with x to the right). A leg has a hip joint ``q1`` and a knee joint
``q2``; ``q2 >= 0`` is the backward-bending knee branch used by IK.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EPS_REACH = 1e-6


class OutOfReach(ValueError):
    """IK target lies outside the annulus the leg can reach."""


@dataclass(frozen=True)
class LegGeometry:
    l1: float = 0.2
    l2: float = 0.2
    hip_offset_x: float = 0.0

    def __post_init__(self):
        if not (self.l1 > 0 and self.l2 > 0):
            raise ValueError("link lengths must be positive")

    @property
    def reach(self) -> float:
        return self.l1 + self.l2

    @property
    def hip_B(self) -> np.ndarray:
        return np.array([self.hip_offset_x, 0.0])


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class TrunkPose:
    p_B_W: np.ndarray
    theta: float

    @property
    def R_B_W(self) -> np.ndarray:
        return rotation(self.theta)


@dataclass(frozen=True)
class TrunkVelocity:
    v_B_W: np.ndarray
    omega: float


@dataclass(frozen=True)
class FootState:
    p_foot_B: np.ndarray
    p_foot_W: np.ndarray
    v_foot_B: np.ndarray = field(default_factory=lambda: np.zeros(2))


def forward_kinematics(q, geom: LegGeometry) -> np.ndarray:
    """Foot position in the hip frame for joint angles ``q = (hip, knee)``."""
    q1, q2 = float(q[0]), float(q[1])
    return np.array([
        geom.l1 * math.sin(q1) + geom.l2 * math.sin(q1 + q2),
        -(geom.l1 * math.cos(q1) + geom.l2 * math.cos(q1 + q2)),
    ])


def inverse_kinematics(p, geom: LegGeometry, eps_reach: float = EPS_REACH) -> np.ndarray:
    """Joint angles placing the foot at hip-frame position ``p`` (knee q2 >= 0)."""
    x, z = float(p[0]), float(p[1])
    l1, l2 = geom.l1, geom.l2
    r2 = x * x + z * z
    r = math.sqrt(r2)
    if r > l1 + l2 - eps_reach + 1e-15 or r < abs(l1 - l2) + eps_reach - 1e-15:
        raise OutOfReach(f"target at distance {r:.6g} m outside reach "
                         f"[{abs(l1 - l2) + eps_reach:.6g}, {l1 + l2 - eps_reach:.6g}]")
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    q2 = math.acos(min(1.0, max(-1.0, c2)))
    # angle of the foot direction measured from straight down, toward +x
    q1 = math.atan2(x, -z) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    return np.array([q1, q2])


def clamp_to_reach(p, geom: LegGeometry, eps_reach: float = EPS_REACH) -> np.ndarray:
    """Scale a hip-frame target radially into the reachable annulus."""
    p = np.asarray(p, dtype=float)
    r = float(np.hypot(p[0], p[1]))
    r_max = geom.l1 + geom.l2 - eps_reach
    r_min = abs(geom.l1 - geom.l2) + eps_reach
    if r > r_max:
        return p * (r_max / r)
    if r < r_min:
        if r < 1e-12:
            return np.array([0.0, -r_min])
        return p * (r_min / r)
    return p


def leg_jacobian(q, geom: LegGeometry) -> np.ndarray:
    q1, q2 = float(q[0]), float(q[1])
    c1, s1 = math.cos(q1), math.sin(q1)
    c12, s12 = math.cos(q1 + q2), math.sin(q1 + q2)
    l1, l2 = geom.l1, geom.l2
    return np.array([
        [l1 * c1 + l2 * c12, l2 * c12],
        [l1 * s1 + l2 * s12, l2 * s12],
    ])


def cross_z(omega: float, p) -> np.ndarray:
    """In-plane ``omega * y_hat x p`` restricted to the sagittal plane: (a, b) -> omega * (-b, a)."""
    return np.array([-omega * p[1], omega * p[0]])


def body_to_world(p_foot_B, pose: TrunkPose) -> np.ndarray:
    return np.asarray(pose.p_B_W, dtype=float) + pose.R_B_W @ np.asarray(p_foot_B, dtype=float)


def world_foot_velocity(v_foot_B, p_foot_B, pose: TrunkPose, vel: TrunkVelocity) -> np.ndarray:
    R = pose.R_B_W
    p_rot = R @ np.asarray(p_foot_B, dtype=float)
    return (np.asarray(vel.v_B_W, dtype=float) + cross_z(vel.omega, p_rot)
            + R @ np.asarray(v_foot_B, dtype=float))


def foot_state(q, qd, geom: LegGeometry, pose: TrunkPose) -> FootState:
    """Body- and world-frame foot quantities for one leg."""
    p_B = geom.hip_B + forward_kinematics(q, geom)
    v_B = leg_jacobian(q, geom) @ np.asarray(qd, dtype=float)
    return FootState(p_foot_B=p_B, p_foot_W=body_to_world(p_B, pose), v_foot_B=v_B)
