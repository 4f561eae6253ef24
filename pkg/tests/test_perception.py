import math
import struct
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saltolab import checks
from saltolab.geometry import TrunkPose
from saltolab.perception import (CameraModel, DepthFrame, GeometryMismatch, HeightmapMemory, LatencyBuffer,
                                 integrate_frame, push_and_fetch, query_heightmap, read_depth_log,
                                 reconstruction_error, render_depth, unproject, write_depth_log)
from saltolab.sim import stand_state
from saltolab.terrain import (Heightmap, HeightmapConfig, TerrainProfile, TerrainSpec, flat_terrain,
                              generate_terrain, height_at, sample_heightmap)

STEP = TerrainProfile(breakpoints=((-math.inf, 0.0), (0.8, 0.3)), extent=6.0)


def state_at(z, theta=0.0, x=0.0):
    return replace(stand_state(), pose=TrunkPose(np.array([x, z]), theta))


def test_straight_down_ray():
    cam = CameraModel(mount_offset=(0.0, 0.0), mount_pitch=-math.pi / 2, fov=0.2, n_rays=3, noise_std=0.0)
    fr = render_depth(state_at(0.34), flat_terrain(), cam)
    assert fr.depths[1] == pytest.approx(0.34, abs=1e-12)
    noisy = render_depth(state_at(0.34), flat_terrain(), replace(cam, noise_std=0.01), np.random.default_rng(0))
    assert abs(noisy.depths[1] - 0.34) < 0.05


def test_rays_above_horizon_miss():
    cam = CameraModel(mount_pitch=0.8, fov=0.4, n_rays=8, noise_std=0.0)
    fr = render_depth(state_at(0.3), flat_terrain(), cam)
    assert np.all(fr.depths == cam.max_range)


def test_riser_gap_matches_analytic_intersection():
    cam = CameraModel(mount_offset=(0.0, 0.0), mount_pitch=-0.35, fov=0.6, n_rays=64, noise_std=0.0)
    s = state_at(0.5)
    fr = render_depth(s, STEP, cam)
    origin, dirs = cam.rays(s.pose)
    # closed form per ray: floor z=0 before the riser, riser x=0.8 up to 0.3, tread z=0.3 beyond
    expected = []
    for dx, dz in dirs:
        t_floor = -origin[1] / dz if dz < 0 else math.inf
        if origin[0] + t_floor * dx < 0.8:
            expected.append(t_floor)
            continue
        t_riser = (0.8 - origin[0]) / dx
        if origin[1] + t_riser * dz <= 0.3:
            expected.append(t_riser)
        else:
            expected.append((0.3 - origin[1]) / dz if dz < 0 else math.inf)
    expected = np.minimum(np.array(expected), cam.max_range)
    np.testing.assert_allclose(fr.depths, expected, atol=1e-12)
    # the neighbouring rays around the edge differ by the riser-induced jump
    i = int(np.argmax(np.abs(np.diff(fr.depths))))
    assert fr.depths[i + 1] - fr.depths[i] == pytest.approx(expected[i + 1] - expected[i], abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), z=st.floats(0.25, 0.5), th=st.floats(-0.3, 0.3))
def test_unprojected_hits_lie_on_terrain(seed, z, th):
    terrain = generate_terrain(TerrainSpec("stairs", 5, seed))
    cam = CameraModel(noise_std=0.0)
    fr = render_depth(state_at(z, th, x=0.6), terrain, cam)
    for x, zz in unproject(fr, cam):
        # on a tread, or on a riser between its two heights
        on_tread = abs(zz - height_at(terrain, x)) < 1e-9
        on_riser = any(abs(x - bx) < 1e-9 for bx in terrain.xs[1:])
        assert on_tread or on_riser


def frame(k):
    return DepthFrame(depths=np.full(2, 1.0), capture_pose=TrunkPose(np.zeros(2), 0.0), capture_step=k)


def test_latency_examples():
    buf = LatencyBuffer(5)
    got = [push_and_fetch(buf, frame(k)).capture_step for k in range(10)]
    assert got[9] == 4
    assert got[2] == 0
    assert got[5:] == [0, 1, 2, 3, 4]
    zero = LatencyBuffer(0)
    assert [zero.push_and_fetch(frame(k)).capture_step for k in range(4)] == [0, 1, 2, 3]


@given(delay=st.integers(0, 12), n=st.integers(1, 60))
def test_latency_exact_once_warm(delay, n):
    buf = LatencyBuffer(delay)
    for k in range(n):
        got = buf.push_and_fetch(frame(k)).capture_step
        assert got == max(k - delay, 0)


def scan(terrain, frames=10, noise=0.0, z=0.30, seed=0):
    cam = CameraModel(noise_std=noise)
    mem = HeightmapMemory.anchored(0.0, HeightmapConfig(), cam)
    rng = np.random.default_rng(seed)
    s = state_at(z)
    for k in range(frames):
        integrate_frame(mem, render_depth(s, terrain, cam, rng, k))
    return mem


def test_flat_scan_converges_to_zero():
    mem = scan(flat_terrain())
    seen = mem.confidence > 0
    assert seen.any()
    np.testing.assert_allclose(mem.height[seen], 0.0, atol=1e-12)
    assert np.all(mem.confidence[mem.last_update < 0] == 0.0)


def test_single_frame_step_edge_within_one_cell():
    mem = scan(STEP, frames=1)
    hm = query_heightmap(mem, 0.0, ground_z=0.0)
    truth = sample_heightmap(STEP, 0.0)
    est_edge = checks.first_edge(hm.values)
    true_edge = checks.first_edge(truth.values)
    assert abs(est_edge - true_edge) <= 1
    assert hm.values[est_edge + 2] == pytest.approx(0.3, abs=1e-9)
    assert hm.values[0] == pytest.approx(0.0, abs=1e-9)


def test_occluded_cells_take_riser_top():
    tall = TerrainProfile(breakpoints=((-math.inf, 0.0), (0.6, 0.25), (0.9, -0.2)), extent=6.0)
    mem = scan(tall, frames=5)
    hm = query_heightmap(mem, 0.0, ground_z=0.0)
    behind = hm.centers > 0.95
    unseen = hm.confidence[behind] == 0
    assert unseen.any()
    assert np.all(hm.values[behind][unseen] == pytest.approx(0.25, abs=1e-9))


def test_empty_memory_gives_zero_map():
    mem = HeightmapMemory.anchored(0.0)
    hm = query_heightmap(mem, 0.0)
    assert np.all(hm.values == 0.0) and hm.low_confidence


def test_repeated_observations_are_a_fixed_point():
    terrain = generate_terrain(TerrainSpec("stairs", 5, 2))
    mem = scan(terrain, frames=3)
    before = mem.height.copy()
    cam = mem.camera
    integrate_frame(mem, render_depth(state_at(0.30), terrain, replace(cam, noise_std=0.0)))
    seen = mem.confidence > 0
    np.testing.assert_allclose(mem.height[seen], before[seen], atol=1e-12)


def test_confidence_decays_between_updates():
    mem = scan(flat_terrain(), frames=1)
    c0 = mem.confidence.copy()
    empty = DepthFrame(depths=np.full(mem.camera.n_rays, mem.camera.max_range),
                       capture_pose=TrunkPose(np.array([0.0, 0.3]), 0.0), capture_step=1)
    integrate_frame(mem, empty)
    assert np.all(mem.confidence <= c0) and np.any(mem.confidence < c0)


def test_query_output_matches_heightmap_contract():
    cfg = HeightmapConfig()
    hm = query_heightmap(scan(STEP), 0.1, cfg, ground_z=0.0)
    assert len(hm.values) == cfg.n_cells and hm.cell_size == cfg.cell_size
    assert hm.origin_x == pytest.approx(0.1 + cfg.x_min)


def test_reconstruction_error_examples():
    truth = sample_heightmap(STEP, 0.0)
    assert reconstruction_error(truth, truth).rms == 0.0
    biased = Heightmap(values=truth.values + 0.05, origin_x=truth.origin_x, cell_size=truth.cell_size)
    assert reconstruction_error(biased, truth).rms == pytest.approx(0.05)
    with pytest.raises(GeometryMismatch):
        reconstruction_error(Heightmap(np.zeros(3), 0.0, 0.05), truth)


def test_stairs_reconstruction_targets():
    clean = checks.reconstruction_metrics(0.0, seed=0)
    noisy = checks.reconstruction_metrics(0.01, seed=0)
    assert clean["rms"] < 0.01 and clean["edge_offset_cells"] <= 1
    assert noisy["rms"] <= 0.05


def test_depth_log_format(tmp_path):
    frames = [np.array([1.0, 2.5, 4.0]), np.array([0.25])]
    path = tmp_path / "depth.bin"
    write_depth_log(path, frames)
    raw = path.read_bytes()
    assert struct.unpack_from("<I", raw, 0) == (3,)
    assert struct.unpack_from("<3f", raw, 4) == (1.0, 2.5, 4.0)
    back = read_depth_log(path)
    assert [b.tolist() for b in back] == [f.tolist() for f in frames]
