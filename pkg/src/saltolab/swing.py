"""Swing-leg control: Raibert footholds, swing trajectories and joint PD tracking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import EPS_REACH, clamp_to_reach, inverse_kinematics
from .sim import RobotParams, RobotState


@dataclass(frozen=True)
class SwingConfig:
    apex_height: float = 0.10
    kp: float = 30.0
    kd: float = 1.0
    k_raibert: float = 0.03
    residual_bound: float = 0.15

    def __post_init__(self):
        if self.apex_height <= 0 or min(self.kp, self.kd, self.k_raibert) < 0:
            raise ValueError("apex_height must be positive and gains non-negative")


@dataclass(frozen=True)
class SwingTarget:
    p_s: np.ndarray
    p_r: np.ndarray

    @property
    def p_target(self) -> np.ndarray:
        return np.asarray(self.p_s, dtype=float) + np.asarray(self.p_r, dtype=float)


def stance_duration(f: float) -> float:
    """Stance time of one leg under the quarter-phase bounding schedule."""
    return 1.0 / (4.0 * f)


def raibert_foothold(hip_x: float, v_x: float, v_ref_x: float, f: float,
                     config: SwingConfig = SwingConfig(), height_fn=None) -> np.ndarray:
    """Nominal touchdown ``(x, z)``; ``height_fn(x)`` supplies the terrain height (0 if omitted)."""
    x = hip_x + 0.5 * stance_duration(f) * v_x + config.k_raibert * (v_x - v_ref_x)
    z = 0.0 if height_fn is None else float(height_fn(x))
    return np.array([x, z])


def clamp_residual(p_r, bound: float) -> np.ndarray:
    return np.clip(np.asarray(p_r, dtype=float), -bound, bound)


def _smoothstep(u: float) -> float:
    return u * u * (3.0 - 2.0 * u)


def swing_trajectory_point(p_liftoff, target: SwingTarget | np.ndarray, s: float,
                           config: SwingConfig = SwingConfig()) -> np.ndarray:
    """Desired world foot position at swing progress ``s`` in [0, 1]."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("swing progress must lie in [0, 1]")
    p0 = np.asarray(p_liftoff, dtype=float)
    p1 = target.p_target if isinstance(target, SwingTarget) else np.asarray(target, dtype=float)
    x = p0[0] + (p1[0] - p0[0]) * _smoothstep(s)
    apex = max(p0[1], p1[1]) + config.apex_height
    if s <= 0.5:
        z = p0[1] + (apex - p0[1]) * _smoothstep(2.0 * s)
    else:
        z = apex + (p1[1] - apex) * _smoothstep(2.0 * s - 1.0)
    return np.array([x, z])


def desired_joint_angles(state: RobotState, leg: int, p_des_W, params: RobotParams = RobotParams(),
                         eps_reach: float = EPS_REACH) -> np.ndarray:
    g = params.geoms[leg]
    p_B = state.pose.R_B_W.T @ (np.asarray(p_des_W, dtype=float) - state.pose.p_B_W)
    return inverse_kinematics(clamp_to_reach(p_B - g.hip_B, g, 2 * eps_reach), g, eps_reach)


def swing_torques(state: RobotState, leg: int, p_des_W, config: SwingConfig = SwingConfig(),
                  params: RobotParams = RobotParams()) -> np.ndarray:
    """Joint PD command tracking the IK solution of ``p_des_W`` (before actuator saturation)."""
    q_des = desired_joint_angles(state, leg, p_des_W, params)
    sl = slice(2 * leg, 2 * leg + 2)
    return config.kp * (q_des - state.q[sl]) - config.kd * state.qd[sl]
