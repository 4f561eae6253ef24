import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saltolab import checks
from saltolab.geometry import (LegGeometry, TrunkPose, TrunkVelocity, forward_kinematics, leg_jacobian,
                               world_foot_velocity)
from saltolab.sim import GRAVITY, RobotParams, stand_state
from saltolab.stance import (ControlWeights, GrfProblem, StanceConfig, build_centroidal_model, feedback_torque,
                             friction_constraints, grf_to_torque, kkt_residuals, NearSingular, qp_cost,
                             qp_matrices, reference_acceleration, reference_foot_velocity, solve_grf_qp,
                             stance_torques)

GEOM = LegGeometry(0.2, 0.2)


def enumerate_active_sets(problem):
    """Exhaustive KKT oracle: best feasible stationary point over every active set."""
    H, c, _, _ = qp_matrices(problem)
    G, h = friction_constraints(problem.k, problem.mu, problem.fz_max)
    n = H.shape[0]
    best = (math.inf, None)
    for r in range(n + 1):
        for S in itertools.combinations(range(len(h)), r):
            S = list(S)
            K = np.block([[H, G[S].T], [G[S], np.zeros((r, r))]])
            try:
                x = np.linalg.solve(K, np.concatenate([-c, h[S]]))
            except np.linalg.LinAlgError:
                continue
            f = x[:n]
            if np.all(G @ f <= h + 1e-9):
                v = qp_cost(problem, f)
                if v < best[0]:
                    best = (v, f)
    return best


def test_reference_acceleration_examples():
    v = TrunkVelocity(np.zeros(2), 0.0)
    np.testing.assert_allclose(reference_acceleration((0, 0, 0), v), 0.0)
    np.testing.assert_allclose(reference_acceleration((1, 0, 0), v), (5, 0, 0))
    np.testing.assert_allclose(reference_acceleration((20, 0, 0), v), (40, 0, 0))


def test_centroidal_model_single_foot():
    A, g = build_centroidal_model(GrfProblem(a_ref=np.zeros(3), r_feet=np.array([[0.0, -0.3]])))
    np.testing.assert_allclose(A, [[1 / 12, 0], [0, 1 / 12], [3, 0]])
    np.testing.assert_allclose(g, (0, -GRAVITY, 0))


def test_centroidal_model_symmetric_feet_no_pitch():
    p = GrfProblem(a_ref=np.zeros(3), r_feet=np.array([[0.19, -0.3], [-0.19, -0.3]]))
    A, g = build_centroidal_model(p)
    a = A @ np.array([0.0, 50.0, 0.0, 50.0]) + g
    assert a[2] == pytest.approx(0.0)


def test_no_contact_cost():
    sol = solve_grf_qp(GrfProblem(a_ref=np.zeros(3), r_feet=np.zeros((0, 2))))
    assert sol.f.shape == (0, 2)
    assert sol.cost == pytest.approx(GRAVITY ** 2)


def test_gravity_compensation_single_foot():
    p = GrfProblem(a_ref=np.zeros(3), r_feet=np.array([[0.0, -0.3]]), weights=ControlWeights(V=1e-12))
    sol = solve_grf_qp(p)
    np.testing.assert_allclose(sol.f[0], (0.0, 12 * GRAVITY), atol=1e-6)
    assert sol.cost < 1e-6


# frozen from the active-set enumeration oracle above
@pytest.mark.parametrize("U, cost", [((1.0, 1.0, 10.0), 401.33526582059403),
                                     ((1.0, 1.0, 0.0), 151.43933517814065)])
def test_forward_push_against_oracles(U, cost):
    p = GrfProblem(a_ref=np.array([20.0, 0.0, 0.0]), r_feet=np.array([[0.0, -0.3]]), weights=ControlWeights(U=U))
    sol = solve_grf_qp(p)
    assert sol.cost == pytest.approx(cost, rel=1e-9)
    assert enumerate_active_sets(p)[0] == pytest.approx(cost, rel=1e-12)
    pg = checks.projected_gradient_oracle([p])[0]
    assert sol.cost <= qp_cost(p, pg) + 1e-6


def test_cone_active_case_hits_the_cone():
    p = GrfProblem(a_ref=np.array([20.0, 0.0, 0.0]), r_feet=np.array([[0.0, -0.3]]),
                   weights=ControlWeights(U=(1.0, 1.0, 0.0)))
    fx, fz = solve_grf_qp(p).f[0]
    assert fx == pytest.approx(0.6 * fz)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_exact_qp_is_optimal(seed):
    p = checks.random_grf_problem(np.random.default_rng(seed))
    sol = solve_grf_qp(p)
    r = kkt_residuals(p, sol)
    assert max(r.values()) < 1e-8
    assert sol.cost <= enumerate_active_sets(p)[0] + 1e-9


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), mode=st.sampled_from(["exact", "approx"]))
def test_cone_feasibility_both_modes(seed, mode):
    p = checks.random_grf_problem(np.random.default_rng(seed))
    f = solve_grf_qp(p, mode).f
    assert np.all(f[:, 1] >= -1e-8) and np.all(f[:, 1] <= p.fz_max + 1e-8)
    assert np.all(np.abs(f[:, 0]) <= p.mu * f[:, 1] + 1e-8)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_foot_order_permutes_solution(seed):
    p = checks.random_grf_problem(np.random.default_rng(seed), k=2)
    q = GrfProblem(a_ref=p.a_ref, r_feet=p.r_feet[::-1], m=p.m, I=p.I, mu=p.mu, fz_max=p.fz_max,
                   weights=p.weights)
    np.testing.assert_allclose(solve_grf_qp(q).f, solve_grf_qp(p).f[::-1], atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(1.0, 5.0))
def test_cost_grows_with_reference_error(seed, scale):
    p = checks.random_grf_problem(np.random.default_rng(seed))
    g = np.array([0.0, -GRAVITY, 0.0])
    far = GrfProblem(a_ref=g + scale * (p.a_ref - g), r_feet=p.r_feet, m=p.m, I=p.I, mu=p.mu,
                     fz_max=p.fz_max, weights=p.weights)
    # the feasible set contains f = 0, whose error is (a_ref - g); scaling it about g never helps
    assert solve_grf_qp(far).cost >= solve_grf_qp(p).cost - 1e-9


def test_grf_to_torque_examples():
    pose = TrunkPose(np.zeros(2), 0.0)
    J = leg_jacobian((0.0, 0.0), GEOM)
    np.testing.assert_allclose(grf_to_torque((0.0, 0.0), pose, J), 0.0)
    np.testing.assert_allclose(grf_to_torque((0.0, 100.0), pose, J), 0.0, atol=1e-12)


@given(q1=st.floats(-1, 1), q2=st.floats(0.1, 2.5), fx=st.floats(-100, 100), fz=st.floats(0, 250),
       th=st.floats(-1, 1), qd1=st.floats(-5, 5), qd2=st.floats(-5, 5))
def test_torque_power_balance(q1, q2, fx, fz, th, qd1, qd2):
    pose = TrunkPose(np.zeros(2), th)
    J = leg_jacobian((q1, q2), GEOM)
    qd = np.array([qd1, qd2])
    tau = grf_to_torque((fx, fz), pose, J)
    f_B = pose.R_B_W.T @ -np.array([fx, fz])
    assert tau @ qd == pytest.approx(f_B @ (J @ qd), abs=1e-10 * (1 + abs(f_B @ (J @ qd))))


def test_reference_foot_velocity_examples():
    pose = TrunkPose(np.zeros(2), 0.0)
    np.testing.assert_allclose(reference_foot_velocity((0, 0), 0.0, (0.2, -0.3), pose), (0, 0))
    np.testing.assert_allclose(reference_foot_velocity((1, 0), 0.0, (0.2, -0.3), pose), (-1, 0))


@given(th=st.floats(-3, 3), vx=st.floats(-3, 3), vz=st.floats(-3, 3), om=st.floats(-5, 5),
       px=st.floats(-0.5, 0.5), pz=st.floats(-0.5, 0.1))
def test_reference_foot_velocity_keeps_foot_still(th, vx, vz, om, px, pz):
    pose = TrunkPose(np.array([0.3, 0.3]), th)
    v = reference_foot_velocity((vx, vz), om, (px, pz), pose)
    w = world_foot_velocity(v, (px, pz), pose, TrunkVelocity(np.array([vx, vz]), om))
    assert np.linalg.norm(w) < 1e-12


def test_foot_velocity_identity_catches_sign_bug():
    assert checks.foot_velocity_identity_metrics()["foot_speed_max"] < 1e-12
    def buggy(v_ref, omega_ref, p_foot_B, pose):
        return -reference_foot_velocity(v_ref, omega_ref, p_foot_B, pose)
    assert checks.foot_velocity_identity_metrics(ref_fn=buggy)["foot_speed_max"] > 1e-3


def test_feedback_torque_examples():
    q = (0.3, 1.2)
    J = leg_jacobian(q, GEOM)
    v = np.array([0.4, -0.1])
    qd = np.linalg.solve(J, v)
    np.testing.assert_allclose(feedback_torque(v, J, qd), 0.0, atol=1e-12)
    np.testing.assert_allclose(feedback_torque(v, J, np.zeros(2), k_d_fb=0.0), 0.0)
    singular = leg_jacobian((0.0, 0.0), GEOM)
    np.testing.assert_allclose(feedback_torque(v, singular, np.zeros(2)), 0.0)
    with pytest.raises(NearSingular):
        feedback_torque(v, singular, np.zeros(2), strict=True)


def _stand_load(p, s, fz):
    return np.concatenate([grf_to_torque((0.0, fz), s.pose, leg_jacobian(s.q[2 * i:2 * i + 2], g))
                           for i, g in enumerate(p.geoms)])


def test_static_stance_gives_gravity_compensation():
    p = RobotParams()
    s = stand_state(p)
    cfg = StanceConfig()
    V = cfg.weights.V
    tau, sol = stance_torques(s, (0.0, 0.0, 0.0), (True, True), p, cfg)
    # symmetric stance, regularized optimum: each foot pushes m g / (2 + V m^2) straight up
    fz = p.m * GRAVITY / (2.0 + V * p.m ** 2)
    np.testing.assert_allclose(tau, _stand_load(p, s, fz), atol=1e-6)
    assert np.linalg.norm(tau) == pytest.approx(np.linalg.norm(_stand_load(p, s, fz)), abs=1e-6)


def test_static_stance_tends_to_half_weight_as_v_vanishes():
    p = RobotParams()
    s = stand_state(p)
    tau, _ = stance_torques(s, (0.0, 0.0, 0.0), (True, True), p, StanceConfig(weights=ControlWeights(V=1e-8)))
    np.testing.assert_allclose(tau, _stand_load(p, s, 0.5 * p.m * GRAVITY), atol=1e-5)


def test_stance_torques_requires_a_stance_leg():
    with pytest.raises(ValueError):
        stance_torques(stand_state(), (0, 0, 0), (False, False))


def test_feedback_improves_omega_tracking():
    on = checks.feedback_tracking_error(1.0, seed=0)
    off = checks.feedback_tracking_error(0.0, seed=0)
    assert on < off
