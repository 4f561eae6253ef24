"""Planar trunk with two massless 2-DOF legs on a piecewise-constant terrain.

Legs carry only a reflected joint inertia ``J_r``; they exert no reaction on the
trunk except through foot contact. Contact is a penalty spring-damper with
tanh-regularized Coulomb friction. Integration is semi-implicit: velocities
first (stance-leg joint velocities implicitly against the linearized contact
law), then positions. With no foot in contact the trunk position update is the
closed-form ballistic one, so free flight is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .geometry import LegGeometry, TrunkPose, TrunkVelocity, inverse_kinematics
from .terrain import TerrainProfile, height_at

GRAVITY = 9.81


class NonFinite(FloatingPointError):
    """Simulation state became NaN/Inf."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class Termination(str, Enum):
    TRUNK_CONTACT = "TrunkContact"
    PITCH_LIMIT = "PitchLimit"
    PIT_FALL = "PitFall"
    NON_FINITE = "NonFinite"


@dataclass(frozen=True)
class ActuatorCurve:
    """Command -> delivered torque for non-negative commands; odd extension below zero."""

    knots: tuple[tuple[float, float], ...] = ((0.0, 0.0), (15.0, 15.0), (25.0, 20.0), (31.0, 23.0))

    def __post_init__(self):
        cmd = [c for c, _ in self.knots]
        out = [o for _, o in self.knots]
        if self.knots[0] != (0.0, 0.0):
            raise ValueError("actuator curve must start at (0, 0)")
        if any(b <= a for a, b in zip(cmd, cmd[1:])):
            raise ValueError("command knots must be strictly increasing")
        if any(b < a for a, b in zip(out, out[1:])) or any(o > c + 1e-12 for c, o in zip(cmd, out)):
            raise ValueError("outputs must be monotone and never exceed the command")

    @property
    def limit(self) -> float:
        return self.knots[-1][1]


def saturate_torque(cmd, curve: ActuatorCurve = ActuatorCurve()):
    xs = [c for c, _ in curve.knots]
    ys = [o for _, o in curve.knots]
    out = np.sign(cmd) * np.interp(np.abs(cmd), xs, ys)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ContactParams:
    k_c: float = 1e4
    d_c: float = 100.0
    mu: float = 0.6
    v_slip: float = 0.01

    def __post_init__(self):
        if min(self.k_c, self.d_c, self.mu, self.v_slip) <= 0 or self.mu >= 2:
            raise ValueError("contact parameters must be positive with mu < 2")


@dataclass(frozen=True)
class RobotParams:
    m: float = 12.0
    I: float = 0.1
    geom_front: LegGeometry = LegGeometry(0.2, 0.2, 0.19)
    geom_rear: LegGeometry = LegGeometry(0.2, 0.2, -0.19)
    tau_limit: float = 23.0
    body_length: float = 0.4
    body_height: float = 0.25
    J_r: float = 0.03
    motors_per_joint: int = 1
    actuator: ActuatorCurve = ActuatorCurve()
    contact: ContactParams = ContactParams()

    @property
    def geoms(self) -> tuple[LegGeometry, LegGeometry]:
        return self.geom_front, self.geom_rear

    def saturate(self, tau):
        """Delivered joint torque; a planar joint drives ``motors_per_joint`` motors in lockstep."""
        n = self.motors_per_joint
        out = n * saturate_torque(np.asarray(tau, dtype=float) / n, self.actuator)
        return np.clip(out, -n * self.tau_limit, n * self.tau_limit)


@dataclass
class RobotState:
    pose: TrunkPose
    vel: TrunkVelocity
    q: np.ndarray
    qd: np.ndarray
    foot_contact: tuple[bool, bool] = (False, False)
    t: float = 0.0
    contact_force: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    def copy(self) -> "RobotState":
        return RobotState(pose=TrunkPose(np.array(self.pose.p_B_W, dtype=float), self.pose.theta),
                          vel=TrunkVelocity(np.array(self.vel.v_B_W, dtype=float), self.vel.omega),
                          q=np.array(self.q, dtype=float), qd=np.array(self.qd, dtype=float),
                          foot_contact=tuple(self.foot_contact), t=self.t,
                          contact_force=np.array(self.contact_force, dtype=float))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.pose.p_B_W, [self.pose.theta], self.vel.v_B_W,
                               [self.vel.omega], self.q, self.qd])


def foot_contact_force(p_foot_W, v_foot_W, terrain: TerrainProfile,
                       params: ContactParams = ContactParams()) -> np.ndarray:
    """Ground-on-foot force (N) of the penalty contact law."""
    d = height_at(terrain, float(p_foot_W[0])) - float(p_foot_W[1])
    if d <= 0:
        return np.zeros(2)
    fz = max(0.0, params.k_c * d - params.d_c * float(v_foot_W[1]))
    fx = -params.mu * fz * math.tanh(float(v_foot_W[0]) / params.v_slip)
    return np.array([fx, fz])


def _wrap(theta: float) -> float:
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def step_physics(state: RobotState, tau, terrain: TerrainProfile,
                 params: RobotParams = RobotParams(), dt: float = 1e-3) -> RobotState:
    """Advance one physics step of length ``dt`` under commanded joint torques ``tau``."""
    if not 0 < dt <= 2e-3:
        raise ValueError("dt must lie in (0, 2 ms]")
    tau_out = params.saturate(tau)
    m, inertia, Jr = params.m, params.I, params.J_r
    cp = params.contact
    x, z = float(state.pose.p_B_W[0]), float(state.pose.p_B_W[1])
    th = state.pose.theta
    vx, vz = float(state.vel.v_B_W[0]), float(state.vel.v_B_W[1])
    om = state.vel.omega
    c, s = math.cos(th), math.sin(th)
    q = [float(v) for v in state.q]
    qd = [float(v) for v in state.qd]

    Fx = Fz = Mo = 0.0
    forces = np.zeros((2, 2))
    contact = [False, False]
    legs = []
    for i, g in enumerate(params.geoms):
        q1, q2 = q[2 * i], q[2 * i + 1]
        s1, c1 = math.sin(q1), math.cos(q1)
        s12, c12 = math.sin(q1 + q2), math.cos(q1 + q2)
        # body-frame foot position and leg Jacobian
        pbx = g.hip_offset_x + g.l1 * s1 + g.l2 * s12
        pbz = -(g.l1 * c1 + g.l2 * c12)
        j11, j12 = g.l1 * c1 + g.l2 * c12, g.l2 * c12
        j21, j22 = g.l1 * s1 + g.l2 * s12, g.l2 * s12
        # B = R J maps joint velocity to world foot velocity
        b11, b12 = c * j11 - s * j21, c * j12 - s * j22
        b21, b22 = s * j11 + c * j21, s * j12 + c * j22
        rx, rz = c * pbx - s * pbz, s * pbx + c * pbz
        px, pz = x + rx, z + rz
        qd1, qd2 = qd[2 * i], qd[2 * i + 1]
        wx, wz = vx - om * rz, vz + om * rx
        fvx, fvz = wx + b11 * qd1 + b12 * qd2, wz + b21 * qd1 + b22 * qd2
        pen = height_at(terrain, px) - pz
        fx = fz = 0.0
        lin = None
        if pen > 0.0:
            fz_raw = cp.k_c * pen - cp.d_c * fvz
            if fz_raw > 0.0:
                fz = fz_raw
                th_v = math.tanh(fvx / cp.v_slip)
                fx = -cp.mu * fz * th_v
                sech2 = 1.0 - th_v * th_v
                # linearization of (fx, fz) w.r.t. foot velocity, position folded in via dt
                dvx = -cp.mu * fz * sech2 / cp.v_slip
                lin = (dvx, cp.mu * th_v, cp.d_c, cp.d_c + cp.k_c * dt)
            contact[i] = True
        forces[i] = (fx, fz)
        Fx += fx
        Fz += fz
        Mo += rx * fz - rz * fx
        legs.append((b11, b12, b21, b22, rx, rz, fx, fz, fvx, fvz, lin))

    ax, az = Fx / m, Fz / m - GRAVITY
    alpha = Mo / inertia
    vx_n, vz_n, om_n = vx + dt * ax, vz + dt * az, om + dt * alpha

    qd_n = [0.0] * 4
    for i, (b11, b12, b21, b22, rx, rz, fx, fz, fvx, fvz, lin) in enumerate(legs):
        t1, t2 = float(tau_out[2 * i]), float(tau_out[2 * i + 1])
        qd1, qd2 = qd[2 * i], qd[2 * i + 1]
        if lin is None:
            qd_n[2 * i] = qd1 + dt * t1 / Jr
            qd_n[2 * i + 1] = qd2 + dt * t2 / Jr
            continue
        dvx, mt, dc, dk = lin
        # f(p+, v+) ~ f0 + D (v+ - v0) + dt K v+ = (f0 - D v0) + M v+, v+ = w+ + B qd+
        dvz_x, dvz_z = mt * dk, -dk
        wx_n, wz_n = vx_n - om_n * rz, vz_n + om_n * rx
        gx = fx - dvx * fvx - mt * dc * fvz + dvx * wx_n + dvz_x * wz_n
        gz = fz + dc * fvz + dvz_z * wz_n
        # D B
        db11 = dvx * b11 + dvz_x * b21
        db12 = dvx * b12 + dvz_x * b22
        db21 = dvz_z * b21
        db22 = dvz_z * b22
        # K = Jr I - dt B^T D B
        k11 = Jr - dt * (b11 * db11 + b21 * db21)
        k12 = -dt * (b11 * db12 + b21 * db22)
        k21 = -dt * (b12 * db11 + b22 * db21)
        k22 = Jr - dt * (b12 * db12 + b22 * db22)
        r1 = Jr * qd1 + dt * (t1 + b11 * gx + b21 * gz)
        r2 = Jr * qd2 + dt * (t2 + b12 * gx + b22 * gz)
        det = k11 * k22 - k12 * k21
        qd_n[2 * i] = (k22 * r1 - k12 * r2) / det
        qd_n[2 * i + 1] = (k11 * r2 - k21 * r1) / det

    x_n = x + dt * vx_n
    z_n = z + dt * vz_n
    if not (contact[0] or contact[1]):
        # free body: closed-form ballistic position, exact for constant gravity
        z_n += 0.5 * GRAVITY * dt * dt
    th_n = _wrap(th + dt * om_n)
    q_n = np.array([q[k] + dt * qd_n[k] for k in range(4)])
    new = RobotState(pose=TrunkPose(np.array([x_n, z_n]), th_n),
                     vel=TrunkVelocity(np.array([vx_n, vz_n]), om_n),
                     q=q_n, qd=np.array(qd_n), foot_contact=(contact[0], contact[1]),
                     t=state.t + dt, contact_force=forces)
    vec = (x_n, z_n, th_n, vx_n, vz_n, om_n, *qd_n, *q_n)
    if not all(math.isfinite(v) for v in vec):
        raise NonFinite("non-finite simulation state",
                        {"t": new.t, "state": list(vec), "tau": list(map(float, tau))})
    return new


def trunk_corners_W(state: RobotState, params: RobotParams = RobotParams()) -> np.ndarray:
    hl, hh = 0.5 * params.body_length, 0.5 * params.body_height
    R = state.pose.R_B_W
    corners = np.array([[hl, hh], [hl, -hh], [-hl, -hh], [-hl, hh]])
    return state.pose.p_B_W + corners @ R.T


def detect_termination(state: RobotState, terrain: TerrainProfile,
                       params: RobotParams = RobotParams(),
                       pitch_limit: float = 1.5, pit_depth: float = 0.5) -> Termination | None:
    if not np.all(np.isfinite(state.as_vector())):
        return Termination.NON_FINITE
    if abs(state.pose.theta) > pitch_limit:
        return Termination.PITCH_LIMIT
    x, z = float(state.pose.p_B_W[0]), float(state.pose.p_B_W[1])
    if z < height_at(terrain, x) - pit_depth:
        return Termination.PIT_FALL
    for cx, cz in trunk_corners_W(state, params):
        if cz < height_at(terrain, float(cx)):
            return Termination.TRUNK_CONTACT
    return None


def stand_state(params: RobotParams = RobotParams(), height: float = 0.30, x: float = 0.0,
                ground: float = 0.0, penetration: float | None = None,
                stance_x: tuple[float, float] | None = None) -> RobotState:
    """Level trunk at ``height`` above ground with both feet on the ground.

    Feet sit under their hips unless ``stance_x`` gives their body-frame x positions.
    ``penetration`` defaults to the double-support spring equilibrium ``m g / (2 k_c)``.
    """
    if penetration is None:
        penetration = params.m * GRAVITY / (2.0 * params.contact.k_c)
    if stance_x is None:
        stance_x = tuple(g.hip_offset_x for g in params.geoms)
    q = np.concatenate([inverse_kinematics((sx - g.hip_offset_x, -(height + penetration)), g)
                        for sx, g in zip(stance_x, params.geoms)])
    return RobotState(pose=TrunkPose(np.array([x, ground + height]), 0.0),
                      vel=TrunkVelocity(np.zeros(2), 0.0), q=q, qd=np.zeros(4))
