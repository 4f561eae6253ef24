"""Headline acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import time

import pytest

from saltolab import checks
from saltolab.cli import main


@pytest.fixture
def report(capsys):
    def emit(name, passed, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        assert passed, detail
    return emit


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_kinematics(report):
    m, secs = timed(checks.kinematics_metrics, 1000)
    ok = m["ik_roundtrip_max"] < 1e-9 and m["jacobian_rel_err_max"] < 1e-5 and secs < 1.0
    report("kinematics", ok, f"IK round trip {m['ik_roundtrip_max']:.2e} rad, Jacobian rel err "
                             f"{m['jacobian_rel_err_max']:.2e}, {secs:.2f} s")


def test_reference_foot_velocity_identity(report):
    m = checks.foot_velocity_identity_metrics(1000)
    report("reference foot velocity identity", m["foot_speed_max"] < 1e-12,
           f"max world foot speed {m['foot_speed_max']:.2e} m/s over 1000 cases")


def test_qp_correctness(report):
    m, secs = timed(checks.qp_metrics, 200, 20)
    ok = (m["kkt_max"] < 1e-8 and m["violation_max"] < 1e-8 and m["oracle_abs_gap_max"] <= 1e-6
          and m["grid_excess_max"] <= 1e-9 and secs < 30.0)
    report("QP correctness", ok,
           f"KKT {m['kkt_max']:.1e}, violation {m['violation_max']:.1e}, "
           f"oracle gap {m['oracle_abs_gap_max']:.1e}, "
           f"grid never better (excess {m['grid_excess_max']:.1e}, gap {m['grid_gap_max']:.1e}), {secs:.1f} s")


def test_qp_cost_in_reward(report):
    m = checks.reward_monotonicity_metrics(100)
    report("QP cost lowers reward", m["violations"] == 0, f"{m['violations']} violations in {m['n']} pairs")


def test_ballistic_flight(report):
    m = checks._ballistic_all()
    ok = m["bounding_segments"] > 0 and m["accel_err_max"] <= 0.01 and m["omega_step_max"] < 1e-6
    report("ballistic flight", ok,
           f"{m['segments']} segments ({m['bounding_segments']} while bounding), accel err "
           f"{m['accel_err_max']:.1e} m/s^2, max |d omega| {m['omega_step_max']:.1e} rad/s")


def test_latency(report):
    m = checks.latency_metrics(1000, 5)
    ok = m["violations"] == 0 and m["checked"] >= 995
    report("latency exactness", ok, f"{m['checked']} steps checked, {m['violations']} off by any amount")


def test_heightmap_randomization(report):
    m = checks.randomization_metrics(100_000)
    ok = (-0.08 <= m["u_min"] and m["u_max"] <= 0.08 and -0.05 <= m["w_min"] and m["w_max"] <= 0.05
          and m["u_coverage"] >= 0.95 and m["w_coverage"] >= 0.95 and m["zero_identity"])
    report("heightmap randomization", ok,
           f"u in [{m['u_min']:.4f}, {m['u_max']:.4f}] ({m['u_coverage']:.1%}), "
           f"w in [{m['w_min']:.4f}, {m['w_max']:.4f}] ({m['w_coverage']:.1%}), zero range identity "
           f"{m['zero_identity']}")


def test_perception_reconstruction(report):
    (clean, noisy), secs = timed(lambda: (checks.reconstruction_metrics(0.0, 0),
                                          checks.reconstruction_metrics(0.01, 0)))
    edge = clean["edge_offset_cells"]
    ok = clean["rms"] < 0.01 and edge is not None and edge <= 1 and noisy["rms"] <= 0.05 and secs < 5.0
    report("perception reconstruction", ok,
           f"clean RMS {clean['rms']:.4f} m, edge off by {edge} cells, "
           f"noisy RMS {noisy['rms']:.4f} m, {secs:.2f} s")


def test_feedback_benefit(report):
    m = checks.feedback_metrics(range(5))
    report("feedback benefit", m["reduction"] >= 0.2,
           f"mean |omega err| {m['err_fb']:.3f} with vs {m['err_no_fb']:.3f} without, "
           f"{m['reduction']:.1%} lower")


def test_scripted_bounding(report):
    m = checks.bounding_metrics(range(5), 5.0)
    ok = m["successes"] >= 4 and m["replay_bitwise"]
    dist = ", ".join(f"{e['distance']:.2f}" for e in m["episodes"])
    report("scripted bounding", ok, f"{m['successes']}/5 clean timeouts >= 1 m (distances {dist} m), "
                                    f"bitwise replay {m['replay_bitwise']}")


def test_performance_budget(report, capsys):
    m = checks.step_time_metrics(300)
    code, secs = timed(main, ["check", "--json", "/dev/null"])
    capsys.readouterr()
    ok = m["median_ms"] < 1.0 and secs < 120.0 and code == 0
    report("performance budget", ok,
           f"median env step {m['median_ms']:.3f} ms, full check {secs:.1f} s (exit {code})")
