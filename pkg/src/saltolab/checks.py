"""Property suites and independent oracles behind ``saltolab check``.

Each check returns a :class:`CheckResult` carrying the measured quantities, so
the acceptance tests can assert on the same numbers the CLI reports.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .env import (ActionCommand, BoundingEnv, EnvConfig, EnvParams, RewardWeights, ScriptedPolicy,
                  Transition, compute_reward, run_rollout)
from .gait import GaitConfig, GaitState, advance_phase, contact_flags, mode_index, swing_progress
from .geometry import (LegGeometry, TrunkPose, TrunkVelocity, forward_kinematics, inverse_kinematics,
                       leg_jacobian, world_foot_velocity)
from .perception import (CameraModel, HeightmapMemory, LatencyBuffer, integrate_frame, query_heightmap,
                         reconstruction_error, render_depth)
from .sim import GRAVITY, RobotParams, stand_state, step_physics
from .stance import (GrfProblem, StanceConfig, friction_constraints, kkt_residuals, qp_cost,
                     reference_foot_velocity, solve_grf_qp, stance_torques)
from .swing import SwingConfig, swing_trajectory_point
from .terrain import (KINDS, HeightmapConfig, RandomizationConfig, TerrainProfile, TerrainSpec,
                      apply_heightmap_shift, draw_heightmap_shift, flat_terrain, generate_terrain,
                      height_at, sample_heightmap)


@dataclass
class CheckResult:
    name: str
    subset: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {"name": self.name, "subset": self.subset, "passed": bool(self.passed),
                "metrics": {k: _jsonable(v) for k, v in self.metrics.items()},
                "seconds": round(self.seconds, 4)}


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


# -- geometry ---------------------------------------------------------------

def kinematics_metrics(n: int = 1000, seed: int = 0, geom: LegGeometry = LegGeometry(0.2, 0.2)) -> dict:
    """IK(FK(q)) round trip and Jacobian against central differences."""
    rng = np.random.default_rng(seed)
    worst_ik = worst_jac = 0.0
    h = 1e-6
    for _ in range(n):
        # stay inside the reachable annulus: knee bent at least a little
        q = np.array([rng.uniform(-math.pi / 2, math.pi / 2), rng.uniform(0.05, math.pi - 0.05)])
        q_back = inverse_kinematics(forward_kinematics(q, geom), geom)
        worst_ik = max(worst_ik, float(np.abs(q_back - q).max()))
        J = leg_jacobian(q, geom)
        fd = np.column_stack([(forward_kinematics(q + h * e, geom) - forward_kinematics(q - h * e, geom))
                              / (2 * h) for e in np.eye(2)])
        worst_jac = max(worst_jac, float(np.linalg.norm(J - fd) / np.linalg.norm(J)))
    return {"ik_roundtrip_max": worst_ik, "jacobian_rel_err_max": worst_jac}


def foot_velocity_identity_metrics(n: int = 1000, seed: int = 1,
                                   ref_fn: Callable = reference_foot_velocity) -> dict:
    """A stance foot driven at the reference foot velocity stays still in the world."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        pose = TrunkPose(rng.uniform(-1, 1, 2), rng.uniform(-math.pi, math.pi))
        p_foot = rng.uniform(-0.4, 0.4, 2)
        v_ref, om_ref = rng.uniform(-3, 3, 2), rng.uniform(-5, 5)
        v_foot_B = ref_fn(v_ref, om_ref, p_foot, pose)
        v_W = world_foot_velocity(v_foot_B, p_foot, pose, TrunkVelocity(v_ref, om_ref))
        worst = max(worst, float(np.linalg.norm(v_W)))
    return {"foot_speed_max": worst}


# -- QP oracles ---------------------------------------------------------------

def _project_foot(fx, fz, mu, fz_max):
    """Euclidean projection onto the triangle {0 <= fz <= fz_max, |fx| <= mu fz}, batched."""
    # vertices (0,0), (mu F, F), (-mu F, F); candidates: the point itself when inside,
    # else the closest point on each edge
    F = fz_max
    inside = (fz >= 0) & (fz <= F) & (np.abs(fx) <= mu * fz)
    best_x, best_z = fx.copy(), fz.copy()
    best_d = np.where(inside, 0.0, np.inf)
    edges = (((0.0, 0.0), (mu * F, F)), ((0.0, 0.0), (-mu * F, F)), ((-mu * F, F), (mu * F, F)))
    for (ax, az), (bx, bz) in edges:
        ex, ez = bx - ax, bz - az
        t = np.clip(((fx - ax) * ex + (fz - az) * ez) / (ex * ex + ez * ez), 0.0, 1.0)
        px, pz = ax + t * ex, az + t * ez
        d = (fx - px) ** 2 + (fz - pz) ** 2
        take = ~inside & (d < best_d)
        best_x = np.where(take, px, best_x)
        best_z = np.where(take, pz, best_z)
        best_d = np.where(take, d, best_d)
    return best_x, best_z


def projected_gradient_oracle(problems: list[GrfProblem], tol: float = 1e-10,
                              max_iter: int = 400_000) -> np.ndarray:
    """Accelerated projected gradient with adaptive restart, all problems in lock step.

    Problems must share the contact count. Returns the (n, 2k) minimizers; stops once
    every problem's fixed-point residual ``|x - P(x - grad/L)|`` is below ``tol``.
    """
    k = problems[0].k
    n = len(problems)
    Hs, cs = np.zeros((n, 2 * k, 2 * k)), np.zeros((n, 2 * k))
    for i, pr in enumerate(problems):
        # gradient of |A f + g - a_ref|_U^2 + V |f|^2 built from scratch
        A = np.zeros((3, 2 * k))
        for j, (rx, rz) in enumerate(np.asarray(pr.r_feet, dtype=float)):
            A[:, 2 * j] = (1.0 / pr.m, 0.0, -rz / pr.I)
            A[:, 2 * j + 1] = (0.0, 1.0 / pr.m, rx / pr.I)
        U = np.diag(pr.weights.U)
        b = np.array([0.0, -GRAVITY, 0.0]) - np.asarray(pr.a_ref, dtype=float)
        Hs[i] = 2.0 * (A.T @ U @ A) + 2.0 * pr.weights.V * np.eye(2 * k)
        cs[i] = 2.0 * A.T @ U @ b
    L = np.linalg.eigvalsh(Hs)[:, -1]
    mu = np.array([p.mu for p in problems])[:, None]
    F = np.array([p.fz_max for p in problems])[:, None]

    def proj(v):
        out = v.copy()
        px, pz = _project_foot(v[:, 0::2], v[:, 1::2], mu, F)
        out[:, 0::2], out[:, 1::2] = px, pz
        return out

    def grad(v):
        return np.einsum("nij,nj->ni", Hs, v) + cs

    x = proj(np.zeros((n, 2 * k)))
    y, t = x.copy(), np.ones(n)
    for _ in range(max_iter):
        x_new = proj(y - grad(y) / L[:, None])
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = ((t - 1.0) / t_new)[:, None]
        # restart momentum where it points uphill
        up = np.einsum("ni,ni->n", y - x_new, x_new - x) > 0
        mom[up] = 0.0
        t_new[up] = 1.0
        y = x_new + mom * (x_new - x)
        x, t = x_new, t_new
        res = np.abs(x - proj(x - grad(x) / L[:, None])).max()
        if res < tol:
            break
    return x


def grid_search_oracle(problem: GrfProblem, resolution: float = 1e-3, points: int = 21) -> tuple[np.ndarray, float]:
    """Coarse-to-fine grid search over the feasible box, refined until the spacing hits ``resolution``."""
    k = problem.k
    mu, F = problem.mu, problem.fz_max
    lo = np.tile([-mu * F, 0.0], k)
    hi = np.tile([mu * F, F], k)
    G, h = friction_constraints(k, mu, F)
    A = np.zeros((3, 2 * k))
    for j, (rx, rz) in enumerate(np.asarray(problem.r_feet, dtype=float)):
        A[:, 2 * j] = (1.0 / problem.m, 0.0, -rz / problem.I)
        A[:, 2 * j + 1] = (0.0, 1.0 / problem.m, rx / problem.I)
    b = np.array([0.0, -GRAVITY, 0.0]) - np.asarray(problem.a_ref, dtype=float)
    U = np.asarray(problem.weights.U, dtype=float)
    best_f, best_c = None, math.inf
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    while True:
        axes = [np.linspace(max(lo[d], center[d] - half[d]), min(hi[d], center[d] + half[d]), points)
                for d in range(2 * k)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2 * k)
        mesh = mesh[np.all(mesh @ G.T <= h + 1e-12, axis=1)]
        if len(mesh):
            e = mesh @ A.T + b
            costs = (e * e) @ U + problem.weights.V * np.einsum("ij,ij->i", mesh, mesh)
            i = int(np.argmin(costs))
            if costs[i] < best_c:
                best_c, best_f = float(costs[i]), mesh[i]
        spacing = 2 * half.max() / (points - 1)
        if spacing <= resolution:
            return best_f, best_c
        center = best_f.copy()
        half = half * 0.5


def random_grf_problem(rng: np.random.Generator, k: int | None = None) -> GrfProblem:
    k = int(rng.integers(1, 3)) if k is None else k
    r = np.column_stack([rng.uniform(-0.35, 0.35, k), rng.uniform(-0.4, -0.15, k)])
    a_ref = np.array([rng.uniform(-30, 30), rng.uniform(-25, 30), rng.uniform(-60, 60)])
    return GrfProblem(a_ref=a_ref, r_feet=r)


def qp_metrics(n: int = 200, n_grid: int = 20, seed: int = 2) -> dict:
    rng = np.random.default_rng(seed)
    problems = [random_grf_problem(rng) for _ in range(n)]
    sols = [solve_grf_qp(p, "exact") for p in problems]
    kkt = max(max(r["stationarity"], r["dual"], r["complementarity"])
              for r in (kkt_residuals(p, s) for p, s in zip(problems, sols)))
    viol = max(kkt_residuals(p, s)["primal"] for p, s in zip(problems, sols))
    gap = abs_gap = 0.0
    for k in (1, 2):
        idx = [i for i, p in enumerate(problems) if p.k == k]
        if not idx:
            continue
        xs = projected_gradient_oracle([problems[i] for i in idx])
        for i, x in zip(idx, xs):
            c_orc = qp_cost(problems[i], x)
            d = abs(sols[i].cost - c_orc)
            abs_gap, gap = max(abs_gap, d), max(gap, d / max(1.0, abs(c_orc)))
    beaten = grid_gap = 0.0
    for i in range(n_grid):
        _, c_grid = grid_search_oracle(problems[i])
        # the grid point is feasible, so it can never be strictly better than the optimum
        beaten = max(beaten, (sols[i].cost - c_grid) / max(1.0, abs(c_grid)))
        grid_gap = max(grid_gap, (c_grid - sols[i].cost) / max(1.0, abs(sols[i].cost)))
    return {"kkt_max": kkt, "violation_max": viol, "oracle_abs_gap_max": abs_gap, "oracle_rel_gap_max": gap,
            "grid_excess_max": beaten, "grid_gap_max": grid_gap, "n": n, "n_grid": n_grid}


# -- reward -------------------------------------------------------------------

def reward_monotonicity_metrics(n: int = 100, seed: int = 3,
                                weights: RewardWeights = RewardWeights()) -> dict:
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(n):
        base = dict(dx=float(rng.uniform(-0.01, 0.02)), contact_match=bool(rng.integers(0, 2)),
                    tau=rng.normal(scale=10.0, size=4), terminated=bool(rng.random() < 0.1))
        c1, c2 = sorted(rng.uniform(0.0, 500.0, 2))
        r1, _ = compute_reward(Transition(qp_cost=c1, **base), weights)
        r2, _ = compute_reward(Transition(qp_cost=c2 + 1e-9, **base), weights)
        violations += not (r2 < r1)
    return {"violations": violations, "n": n}


# -- physics --------------------------------------------------------------------

def flight_segments(records, min_physics_steps: int = 10, substeps: int = 2) -> list[list]:
    """Runs of consecutive tick records free of contact in every physics step, long enough."""
    runs, cur = [], []
    for rec in records:
        if rec.contact_substeps == 0 and not np.any(rec.state.contact_force):
            cur.append(rec)
        else:
            if len(cur) * substeps >= min_physics_steps:
                runs.append(cur)
            cur = []
    if len(cur) * substeps >= min_physics_steps:
        runs.append(cur)
    return runs


def ballistic_metrics(records, substeps: int = 2) -> dict:
    """Fitted vertical acceleration and per-tick pitch-rate change across every flight segment."""
    segs = flight_segments(records, substeps=substeps)
    acc_err = dom = 0.0
    fitted = []
    for seg in segs:
        t = np.array([r.t for r in seg])
        z = np.array([r.state.pose.p_B_W[1] for r in seg])
        a = 2.0 * np.polyfit(t - t[0], z, 2)[0]
        fitted.append(a)
        acc_err = max(acc_err, abs(a + GRAVITY))
        om = np.array([r.state.vel.omega for r in seg])
        if len(om) > 1:
            dom = max(dom, float(np.abs(np.diff(om)).max()))
    return {"segments": len(segs), "accel_err_max": acc_err, "omega_step_max": dom,
            "fitted_accels": [float(a) for a in fitted[:5]]}


def ballistic_drop_records(height: float = 0.8, n_ticks: int = 60, seed: int = 4):
    """A tossed robot with random swing torques, recorded at control-tick rate."""
    from .env import TickRecord, RewardTerms
    rng = np.random.default_rng(seed)
    params = RobotParams()
    st = stand_state(params)
    st = replace(st, pose=TrunkPose(np.array([0.0, height]), 0.0), vel=TrunkVelocity(np.array([0.5, 1.0]), 0.7))
    out = []
    for _ in range(n_ticks):
        tau = rng.normal(scale=3.0, size=4)
        for _ in range(2):
            st = step_physics(st, tau, flat_terrain(), params)
        out.append(TickRecord(t=st.t, state=st, phi=0.0, tau=tau, qp_cost=0.0, reward=0.0,
                              terms=RewardTerms(), v_ref=(0.0, 0.0, 0.0)))
    return out


# -- gait / swing / terrain -------------------------------------------------------

def gait_metrics(n: int = 2000, seed: int = 5, config: GaitConfig = GaitConfig()) -> dict:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        st = GaitState(phi=float(rng.uniform(0, 2 * math.pi)), f=2.0)
        m = mode_index(st, config)
        fr, rr = contact_flags(st, config)
        bad += not (0 <= m <= 3)
        bad += (fr and rr)
        for leg, c in ((0, fr), (1, rr)):
            if not c:
                s = swing_progress(st, leg, config)
                bad += not (0.0 <= s <= 1.0)
        nxt = advance_phase(st, float(rng.uniform(-5, 10)), 2e-3, config)
        bad += not (0.0 <= nxt.phi < 2 * math.pi and config.f_min <= nxt.f <= config.f_max)
    return {"violations": bad, "n": n}


def swing_metrics(n: int = 500, seed: int = 6, config: SwingConfig = SwingConfig()) -> dict:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        p0 = rng.uniform(-1, 1, 2)
        p1 = rng.uniform(-1, 1, 2)
        a = swing_trajectory_point(p0, p1, 0.0, config)
        b = swing_trajectory_point(p0, p1, 1.0, config)
        mid = swing_trajectory_point(p0, p1, 0.5, config)
        bad += not np.allclose(a, p0, atol=1e-12)
        bad += not np.allclose(b, p1, atol=1e-12)
        bad += not math.isclose(mid[1], max(p0[1], p1[1]) + config.apex_height, abs_tol=1e-12)
    return {"violations": bad, "n": n}


def terrain_metrics(seed: int = 7) -> dict:
    bad = 0
    for kind in KINDS:
        for level in (0, 5, 9):
            t = generate_terrain(TerrainSpec(kind, level, seed))
            back = TerrainProfile.from_json(t.to_json())
            bad += back != t or back.to_json() != t.to_json()
            bad += generate_terrain(TerrainSpec(kind, level, seed)) != t
            bad += height_at(t, -1e3) != 0.0
    return {"violations": bad}


def randomization_metrics(n: int = 100_000, seed: int = 8,
                          config: RandomizationConfig = RandomizationConfig()) -> dict:
    rng = np.random.default_rng(seed)
    draws = np.array([draw_heightmap_shift(rng, config) for _ in range(n)])
    u, w = draws[:, 0], draws[:, 1]
    hm = sample_heightmap(generate_terrain(TerrainSpec("stairs", 5, 0)), 0.3)
    z_rng = np.random.default_rng(seed)
    zero = RandomizationConfig(0.0, 0.0)
    ident = all(np.array_equal(apply_heightmap_shift(hm, *draw_heightmap_shift(z_rng, zero)).values, hm.values)
                for _ in range(100))
    return {"u_min": float(u.min()), "u_max": float(u.max()), "w_min": float(w.min()),
            "w_max": float(w.max()),
            "u_coverage": float((u.max() - u.min()) / (2 * config.shift_x)),
            "w_coverage": float((w.max() - w.min()) / (2 * config.shift_z)),
            "zero_identity": bool(ident)}


# -- perception ------------------------------------------------------------------

def latency_metrics(n_steps: int = 1000, delay: int = 5, seed: int = 0) -> dict:
    """Capture step of the fetched frame along a real bounding rollout."""
    from .env import DEFAULT_BOUNDING_PARAMS, DEFAULT_SCRIPTED
    p = DEFAULT_BOUNDING_PARAMS
    p = replace(p, env=replace(p.env, latency_steps=delay, timeout_s=(n_steps + 1) * p.env.step_dt))
    env = BoundingEnv(p, flat_terrain(), seed)
    pol = ScriptedPolicy(DEFAULT_SCRIPTED, p.heightmap)
    obs = env.observation()
    bad, checked = 0, 0
    for _ in range(n_steps):
        obs, _, done, info = env.step(pol(obs))
        if done:
            break
        if env.step_count >= delay:
            checked += 1
            bad += info["frame_step"] != env.step_count - delay
    return {"checked": checked, "violations": bad, "termination": env.termination}


def first_edge(values: np.ndarray, jump: float = 0.05) -> int | None:
    d = np.flatnonzero(np.abs(np.diff(values)) > jump)
    return int(d[0]) + 1 if d.size else None


def reconstruction_metrics(noise: float, seed: int, level: int = 5, frames: int = 30) -> dict:
    """Static robot at the spawn point facing a stairs profile; memory fed through the latency buffer."""
    terrain = generate_terrain(TerrainSpec("stairs", level, seed))
    cam = CameraModel(noise_std=noise)
    hm_cfg = HeightmapConfig()
    state = stand_state(height=0.30)
    mem = HeightmapMemory.anchored(0.0, hm_cfg, cam)
    buf = LatencyBuffer(5)
    rng = np.random.default_rng(seed)
    for k in range(frames):
        integrate_frame(mem, buf.push_and_fetch(render_depth(state, terrain, cam, rng, k)))
    est = query_heightmap(mem, 0.0, hm_cfg, ground_z=0.0)
    truth = sample_heightmap(terrain, 0.0, hm_cfg)
    conf = est.confidence >= mem.config.min_confidence
    m = reconstruction_error(est, truth, conf)
    e_true, e_est = first_edge(truth.values), first_edge(np.where(conf, est.values, 0.0))
    offset = None if e_true is None or e_est is None else abs(e_true - e_est)
    return {"rms": m.rms_confident, "n_confident": m.n_confident, "edge_offset_cells": offset}


# -- control ------------------------------------------------------------------------

def feedback_tracking_error(k_d_fb: float, seed: int, period: float = 0.2, amplitude: float = 2.0,
                            duration: float = 1.0) -> float:
    """Mean |omega - omega_ref| in double stance under a square-wave pitch-rate reference."""
    params = RobotParams()
    cfg = StanceConfig(k_d_fb=k_d_fb)
    rng = np.random.default_rng(seed)
    st = stand_state(params, height=0.30)
    st = replace(st, vel=TrunkVelocity(rng.normal(scale=0.05, size=2), float(rng.normal(scale=0.1))))
    terrain = flat_terrain()
    errs = []
    n_ticks = int(round(duration / 2e-3))
    for k in range(n_ticks):
        t = k * 2e-3
        w = amplitude if (t % period) < 0.5 * period else -amplitude
        tau, _ = stance_torques(st, (0.0, 0.0, w), (True, True), params, cfg)
        for _ in range(2):
            st = step_physics(st, tau, terrain, params)
        errs.append(abs(st.vel.omega - w))
    return float(np.mean(errs))


def feedback_metrics(seeds=range(5)) -> dict:
    with_fb = [feedback_tracking_error(1.0, s) for s in seeds]
    without = [feedback_tracking_error(0.0, s) for s in seeds]
    return {"err_fb": float(np.mean(with_fb)), "err_no_fb": float(np.mean(without)),
            "reduction": 1.0 - float(np.mean(with_fb)) / float(np.mean(without)),
            "per_seed_fb": with_fb, "per_seed_no_fb": without}


# -- end to end -----------------------------------------------------------------------

def bounding_episode(seed: int, duration: float = 5.0, params: EnvParams | None = None,
                     policy_params=None, records: list | None = None):
    from .env import DEFAULT_BOUNDING_PARAMS, DEFAULT_SCRIPTED
    params = params or DEFAULT_BOUNDING_PARAMS
    params = replace(params, env=replace(params.env, timeout_s=duration))
    env = BoundingEnv(params, flat_terrain(), seed)
    rows: list[dict] = []
    actions: list = []
    summary = run_rollout(env, ScriptedPolicy(policy_params or DEFAULT_SCRIPTED, params.heightmap),
                          int(round(duration / params.env.step_dt)) + 1, rows.append, actions)
    return summary, rows, actions


def bounding_metrics(seeds=range(5), duration: float = 5.0) -> dict:
    from .env import TIMEOUT, ReplayPolicy
    results = []
    replay_ok = True
    for i, seed in enumerate(seeds):
        summary, rows, actions = bounding_episode(seed, duration)
        results.append({"seed": seed, "distance": summary.distance, "termination": summary.termination,
                        "steps": summary.steps})
        if i == 0:
            from .env import DEFAULT_BOUNDING_PARAMS
            p = replace(DEFAULT_BOUNDING_PARAMS, env=replace(DEFAULT_BOUNDING_PARAMS.env, timeout_s=duration))
            env = BoundingEnv(p, flat_terrain(), seed)
            again: list[dict] = []
            run_rollout(env, ReplayPolicy(actions), len(actions), again.append)
            replay_ok = again == rows
    ok = sum(r["termination"] == TIMEOUT and r["distance"] >= 1.0 for r in results)
    return {"episodes": results, "successes": ok, "replay_bitwise": replay_ok}


def step_time_metrics(n_steps: int = 300, seed: int = 0) -> dict:
    from .env import DEFAULT_BOUNDING_PARAMS, DEFAULT_SCRIPTED
    env = BoundingEnv(DEFAULT_BOUNDING_PARAMS, flat_terrain(), seed)
    pol = ScriptedPolicy(DEFAULT_SCRIPTED)
    obs = env.observation()
    env.step(pol(obs))  # compile / warm caches
    times = []
    for _ in range(n_steps):
        if env.done:
            obs = env.reset()
        act = pol(obs)
        t0 = time.perf_counter()
        obs, _, _, _ = env.step(act)
        times.append(time.perf_counter() - t0)
    return {"median_ms": 1e3 * float(np.median(times)), "p90_ms": 1e3 * float(np.percentile(times, 90))}


# -- registry --------------------------------------------------------------------------

def _check(name, subset, fn, ok):
    def run() -> CheckResult:
        t0 = time.perf_counter()
        try:
            m = fn()
            passed = bool(ok(m))
        except Exception as exc:  # a crash is a failure, reported with its message
            m, passed = {"error": f"{type(exc).__name__}: {exc}"}, False
        return CheckResult(name, subset, passed, m, time.perf_counter() - t0)
    return run


def _recon_all():
    out = {}
    for noise in (0.0, 0.01):
        ms = [reconstruction_metrics(noise, s) for s in range(5)]
        out[f"rms_max_noise_{noise}"] = max(m["rms"] for m in ms)
        offs = [m["edge_offset_cells"] for m in ms]
        out[f"edge_offset_max_noise_{noise}"] = None if None in offs else max(offs)
    return out


def _ballistic_all():
    from .env import DEFAULT_BOUNDING_PARAMS, DEFAULT_SCRIPTED
    p = DEFAULT_BOUNDING_PARAMS
    env = BoundingEnv(replace(p, env=replace(p.env, timeout_s=3.0)), flat_terrain(), 0)
    pol = ScriptedPolicy(DEFAULT_SCRIPTED)
    recs = []
    obs = env.observation()
    while not env.done:
        obs, _, _, info = env.step(pol(obs))
        recs.extend(info["ticks"])
    bound, drop = ballistic_metrics(recs), ballistic_metrics(ballistic_drop_records())
    return {"segments": bound["segments"] + drop["segments"], "bounding_segments": bound["segments"],
            "accel_err_max": max(bound["accel_err_max"], drop["accel_err_max"]),
            "omega_step_max": max(bound["omega_step_max"], drop["omega_step_max"]),
            "fitted_accels": bound["fitted_accels"] + drop["fitted_accels"]}


SUITES: dict[str, list] = {
    "geometry": [
        _check("kinematics", "geometry", kinematics_metrics,
               lambda m: m["ik_roundtrip_max"] < 1e-9 and m["jacobian_rel_err_max"] < 1e-5),
        _check("foot_velocity_identity", "geometry", foot_velocity_identity_metrics,
               lambda m: m["foot_speed_max"] < 1e-12),
    ],
    "terrain": [
        _check("terrain_roundtrip", "terrain", terrain_metrics, lambda m: m["violations"] == 0),
        _check("heightmap_randomization", "terrain", randomization_metrics,
               lambda m: (-0.08 <= m["u_min"] and m["u_max"] <= 0.08 and -0.05 <= m["w_min"]
                          and m["w_max"] <= 0.05 and m["u_coverage"] >= 0.95 and m["w_coverage"] >= 0.95
                          and m["zero_identity"])),
    ],
    "gait": [_check("gait_schedule", "gait", gait_metrics, lambda m: m["violations"] == 0)],
    "sim": [
        _check("ballistic_flight", "sim", _ballistic_all,
               lambda m: m["segments"] > 0 and m["accel_err_max"] <= 0.01 and m["omega_step_max"] < 1e-6),
    ],
    "qp": [
        _check("qp_oracle", "qp", qp_metrics,
               lambda m: (m["kkt_max"] < 1e-8 and m["violation_max"] < 1e-8
                          and m["oracle_abs_gap_max"] <= 1e-6 and m["grid_excess_max"] <= 1e-9
                          and m["grid_gap_max"] <= 1e-2)),
        _check("feedback_benefit", "qp", feedback_metrics, lambda m: m["reduction"] >= 0.2),
    ],
    "swing": [_check("swing_trajectory", "swing", swing_metrics, lambda m: m["violations"] == 0)],
    "perception": [
        _check("latency", "perception", latency_metrics,
               lambda m: m["violations"] == 0 and m["checked"] >= 995),
        _check("reconstruction", "perception", _recon_all,
               lambda m: (m["rms_max_noise_0.0"] < 0.01 and m["edge_offset_max_noise_0.0"] is not None
                          and m["edge_offset_max_noise_0.0"] <= 1 and m["rms_max_noise_0.01"] <= 0.05)),
    ],
    "env": [
        _check("reward_monotonicity", "env", reward_monotonicity_metrics, lambda m: m["violations"] == 0),
        _check("scripted_bounding", "env", bounding_metrics,
               lambda m: m["successes"] >= 4 and m["replay_bitwise"]),
        _check("step_time", "env", step_time_metrics, lambda m: m["median_ms"] < 1.0),
    ],
}


def run_checks(subset: str | None = None) -> list[CheckResult]:
    if subset is not None and subset not in SUITES:
        raise KeyError(f"unknown subset {subset!r}; choose from {', '.join(SUITES)}")
    names = [subset] if subset else list(SUITES)
    return [check() for name in names for check in SUITES[name]]
