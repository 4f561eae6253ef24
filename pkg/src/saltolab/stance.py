"""Stance-leg control: centroidal GRF optimization plus joint-velocity feedback."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import TrunkPose, TrunkVelocity, cross_z, forward_kinematics, leg_jacobian
from .sim import GRAVITY, RobotParams, RobotState

log = logging.getLogger(__name__)


class SolverFailure(RuntimeError):
    pass


class NearSingular(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ControlWeights:
    """Diagonal weights: ``U`` on (a_x, a_z, alpha) tracking, ``V`` on every force component."""

    U: tuple[float, float, float] = (1.0, 1.0, 10.0)
    V: float = 1e-4

    def __post_init__(self):
        if min(self.U) < 0 or self.V <= 0:
            raise ValueError("need U >= 0 and V > 0")


@dataclass(frozen=True)
class StanceConfig:
    weights: ControlWeights = ControlWeights()
    k_v: tuple[float, float, float] = (5.0, 5.0, 5.0)
    a_max: tuple[float, float, float] = (40.0, 40.0, 80.0)
    mu: float = 0.6
    fz_max: float = 250.0
    k_d_fb: float = 1.0
    det_min: float = 1e-4
    mode: str = "exact"


@dataclass(frozen=True)
class GrfProblem:
    """``r_feet`` holds each contact foot's world position relative to the CoM, shape (k, 2)."""

    a_ref: np.ndarray
    r_feet: np.ndarray
    m: float = 12.0
    I: float = 0.1
    mu: float = 0.6
    fz_max: float = 250.0
    weights: ControlWeights = ControlWeights()

    @property
    def k(self) -> int:
        return len(self.r_feet)


@dataclass
class GrfSolution:
    f: np.ndarray                 # (k, 2) ground-on-robot forces
    a_achieved: np.ndarray
    cost: float
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    active: tuple[int, ...] = ()
    iterations: int = 0


def reference_acceleration(v_ref, vel: TrunkVelocity, k_v=(5.0, 5.0, 5.0),
                           a_max=(40.0, 40.0, 80.0)) -> np.ndarray:
    """Velocity-error PD rule on (v_x, v_z, omega), clamped componentwise."""
    v_act = np.array([vel.v_B_W[0], vel.v_B_W[1], vel.omega])
    a = np.asarray(k_v, dtype=float) * (np.asarray(v_ref, dtype=float) - v_act)
    lim = np.asarray(a_max, dtype=float)
    return np.clip(a, -lim, lim)


def build_centroidal_model(problem: GrfProblem) -> tuple[np.ndarray, np.ndarray]:
    """``a = A f + g`` with ``f = (f_x0, f_z0, f_x1, f_z1, ...)``."""
    k = problem.k
    if k < 1:
        raise ValueError("centroidal model needs at least one contact foot")
    A = np.zeros((3, 2 * k))
    for i, (rx, rz) in enumerate(np.asarray(problem.r_feet, dtype=float)):
        A[0, 2 * i] = 1.0 / problem.m
        A[1, 2 * i + 1] = 1.0 / problem.m
        A[2, 2 * i] = -rz / problem.I
        A[2, 2 * i + 1] = rx / problem.I
    return A, np.array([0.0, -GRAVITY, 0.0])


def friction_constraints(k: int, mu: float, fz_max: float) -> tuple[np.ndarray, np.ndarray]:
    """``G f <= h``: per foot ``-fz <= 0``, ``fz <= fz_max``, ``fx - mu fz <= 0``, ``-fx - mu fz <= 0``."""
    G = np.zeros((4 * k, 2 * k))
    h = np.zeros(4 * k)
    for i in range(k):
        x, z = 2 * i, 2 * i + 1
        G[4 * i, z] = -1.0
        G[4 * i + 1, z] = 1.0
        h[4 * i + 1] = fz_max
        G[4 * i + 2, x], G[4 * i + 2, z] = 1.0, -mu
        G[4 * i + 3, x], G[4 * i + 3, z] = -1.0, -mu
    return G, h


def qp_matrices(problem: GrfProblem):
    """Objective as ``f^T H f / 2 + c^T f + const`` plus the linear model."""
    A, g = build_centroidal_model(problem)
    U = np.diag(problem.weights.U)
    H = 2.0 * (A.T @ U @ A + problem.weights.V * np.eye(A.shape[1]))
    c = 2.0 * A.T @ U @ (g - np.asarray(problem.a_ref, dtype=float))
    return H, c, A, g


def qp_cost(problem: GrfProblem, f_flat) -> float:
    f_flat = np.asarray(f_flat, dtype=float).ravel()
    g = np.array([0.0, -GRAVITY, 0.0])
    if problem.k == 0:
        e = g - np.asarray(problem.a_ref, dtype=float)
        return float(e @ (np.asarray(problem.weights.U) * e))
    A, g = build_centroidal_model(problem)
    e = A @ f_flat + g - np.asarray(problem.a_ref, dtype=float)
    return float(e @ (np.asarray(problem.weights.U) * e) + problem.weights.V * (f_flat @ f_flat))


def _active_set(H, c, G, h, x0, max_iter=50, tol=1e-12):
    """Primal active-set method for a strictly convex QP from a feasible start."""
    n = len(x0)
    x = x0.copy()
    W: list[int] = []
    for it in range(1, max_iter + 1):
        m = len(W)
        K = np.zeros((n + m, n + m))
        K[:n, :n] = H
        if m:
            Gw = G[W]
            K[:n, n:] = Gw.T
            K[n:, :n] = Gw
        rhs = np.concatenate([-c, h[W]])
        sol = np.linalg.solve(K, rhs)
        x_eq, lam_w = sol[:n], sol[n:]
        p = x_eq - x
        scale = 1.0 + np.abs(x).max()
        if np.abs(p).max() <= tol * scale:
            x = x_eq
            if m == 0 or lam_w.min() >= -tol * (1.0 + np.abs(lam_w).max()):
                lam = np.zeros(len(h))
                lam[W] = np.maximum(lam_w, 0.0)
                return x, lam, tuple(sorted(W)), it
            W.pop(int(np.argmin(lam_w)))
            continue
        # ratio test over constraints outside the working set
        Gp = G @ p
        slack = h - G @ x
        alpha, block = 1.0, -1
        for i in range(len(h)):
            if i in W or Gp[i] <= 1e-14 * scale:
                continue
            a_i = max(slack[i], 0.0) / Gp[i]
            if a_i < alpha:
                alpha, block = a_i, i
        x = x + alpha * p
        if block >= 0:
            W.append(block)
    raise SolverFailure(f"active set did not converge in {max_iter} iterations")


def solve_grf_qp(problem: GrfProblem, mode: str = "exact", max_iter: int = 50) -> GrfSolution:
    """Minimize ``|A f + g - a_ref|_U^2 + |f|_V^2`` over per-foot friction cones and force boxes."""
    k = problem.k
    if k == 0:
        g = np.array([0.0, -GRAVITY, 0.0])
        return GrfSolution(f=np.zeros((0, 2)), a_achieved=g, cost=qp_cost(problem, []))
    if k > 2:
        raise ValueError("planar bounding has at most two contact feet")
    H, c, A, g = qp_matrices(problem)
    G, h = friction_constraints(k, problem.mu, problem.fz_max)
    if mode == "exact":
        x0 = np.tile([0.0, 0.5 * problem.fz_max], k)
        f, lam, active, iters = _active_set(H, c, G, h, x0, max_iter=max_iter)
    elif mode == "approx":
        f = np.linalg.solve(H, -c).reshape(k, 2)
        f[:, 1] = np.clip(f[:, 1], 0.0, problem.fz_max)
        f[:, 0] = np.clip(f[:, 0], -problem.mu * f[:, 1], problem.mu * f[:, 1])
        f, lam, active, iters = f.ravel(), np.zeros(0), (), 0
    else:
        raise ValueError(f"unknown QP mode {mode!r}")
    return GrfSolution(f=f.reshape(k, 2), a_achieved=A @ f + g, cost=qp_cost(problem, f),
                       lam=lam, active=active, iterations=iters)


def kkt_residuals(problem: GrfProblem, sol: GrfSolution) -> dict[str, float]:
    """Stationarity, primal feasibility, dual feasibility and complementarity residuals."""
    H, c, _, _ = qp_matrices(problem)
    G, h = friction_constraints(problem.k, problem.mu, problem.fz_max)
    f = sol.f.ravel()
    lam = sol.lam
    slack = h - G @ f
    return {
        "stationarity": float(np.abs(H @ f + c + G.T @ lam).max()),
        "primal": float(max(0.0, -slack.min())),
        "dual": float(max(0.0, -lam.min())),
        "complementarity": float(np.abs(lam * slack).max()),
    }


def grf_to_torque(f, pose: TrunkPose, J: np.ndarray) -> np.ndarray:
    """Joint torques producing ground-on-robot force ``f``: ``tau = J^T R^T (-f)``."""
    return J.T @ (pose.R_B_W.T @ (-np.asarray(f, dtype=float)))


def reference_foot_velocity(v_ref, omega_ref: float, p_foot_B, pose: TrunkPose) -> np.ndarray:
    """Body-frame foot velocity that keeps a stance foot static while the trunk moves at the reference."""
    R = pose.R_B_W
    p_rot = R @ np.asarray(p_foot_B, dtype=float)
    return -R.T @ (np.asarray(v_ref, dtype=float) + cross_z(omega_ref, p_rot))


def feedback_torque(v_foot_B_ref, J: np.ndarray, qd, k_d_fb: float = 1.0,
                    det_min: float = 1e-4, strict: bool = False) -> np.ndarray:
    """``k_d_fb (J^-1 v_ref - qd)``; zero (feedforward only) near a singular Jacobian."""
    if abs(np.linalg.det(J)) <= det_min:
        if strict:
            raise NearSingular(f"|det J| = {abs(np.linalg.det(J)):.3g} <= {det_min}")
        return np.zeros(2)
    qd_ref = np.linalg.solve(J, np.asarray(v_foot_B_ref, dtype=float))
    return k_d_fb * (qd_ref - np.asarray(qd, dtype=float))


def stance_torques(state: RobotState, v_ref, stance: tuple[bool, bool],
                   params: RobotParams = RobotParams(), config: StanceConfig = StanceConfig()
                   ) -> tuple[np.ndarray, GrfSolution]:
    """Feedforward GRF torques plus feedback torques for the stance legs (zeros for swing legs)."""
    if not any(stance):
        raise ValueError("stance_torques needs at least one stance leg")
    pose = state.pose
    R = pose.R_B_W
    legs = [i for i in (0, 1) if stance[i]]
    feet_B, jacs = {}, {}
    for i in legs:
        g = params.geoms[i]
        q = state.q[2 * i:2 * i + 2]
        jacs[i] = leg_jacobian(q, g)
        feet_B[i] = g.hip_B + forward_kinematics(q, g)
    problem = GrfProblem(
        a_ref=reference_acceleration(v_ref, state.vel, config.k_v, config.a_max),
        r_feet=np.array([R @ feet_B[i] for i in legs]),
        m=params.m, I=params.I, mu=config.mu, fz_max=config.fz_max, weights=config.weights)
    sol = solve_grf_qp(problem, config.mode)
    tau = np.zeros(4)
    v_lin, om_ref = np.asarray(v_ref[:2], dtype=float), float(v_ref[2])
    for j, i in enumerate(legs):
        t = grf_to_torque(sol.f[j], pose, jacs[i])
        if config.k_d_fb > 0:
            v_foot = reference_foot_velocity(v_lin, om_ref, feet_B[i], pose)
            t = t + feedback_torque(v_foot, jacs[i], state.qd[2 * i:2 * i + 2],
                                    config.k_d_fb, config.det_min)
        tau[2 * i:2 * i + 2] = t
    return tau, sol
