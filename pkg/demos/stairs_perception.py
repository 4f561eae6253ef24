"""What the robot sees in front of a staircase, and how far the bound gets up it.

    python3 demos/stairs_perception.py
"""

import numpy as np

from saltolab import checks
from saltolab.cli import features_passed
from saltolab.env import DEFAULT_BOUNDING_PARAMS, DEFAULT_SCRIPTED, BoundingEnv, ScriptedPolicy, run_rollout
from saltolab.perception import CameraModel, HeightmapMemory, integrate_frame, query_heightmap, render_depth
from saltolab.sim import stand_state
from saltolab.terrain import HeightmapConfig, TerrainSpec, generate_terrain, sample_heightmap


def show(label, values):
    print(f"{label:>8} " + " ".join(f"{v:5.2f}" for v in values))


def reconstruction(level=5, noise=0.01, frames=30):
    terrain = generate_terrain(TerrainSpec("stairs", level, 0))
    cam = CameraModel(noise_std=noise)
    mem = HeightmapMemory.anchored(0.0, HeightmapConfig(), cam)
    rng = np.random.default_rng(0)
    s = stand_state()
    for k in range(frames):
        integrate_frame(mem, render_depth(s, terrain, cam, rng, k))
    x = float(s.pose.p_B_W[0])
    est = query_heightmap(mem, x, ground_z=0.0)
    truth = sample_heightmap(terrain, x)
    print(f"level-{level} stairs, depth noise {noise} m, {frames} frames")
    show("cell x", truth.centers)
    show("truth", truth.values)
    show("seen", est.values)
    m = checks.reconstruction_metrics(noise, 0, level, frames)
    print(f"confident-cell RMS {m['rms']:.4f} m, first edge off by {m['edge_offset_cells']} cells\n")


def climb(level=9):
    spec = TerrainSpec("stairs", level, 1)
    terrain = generate_terrain(spec)
    env = BoundingEnv(DEFAULT_BOUNDING_PARAMS, terrain, seed=1)
    s = run_rollout(env, ScriptedPolicy(DEFAULT_SCRIPTED), 1000)
    x = float(env.state.pose.p_B_W[0])
    print(f"level-{level} stairs: {s.distance:.2f} m, {features_passed(terrain, x)} stair edges passed, "
          f"ended by {s.termination}")
    print("the flat-ground bound has no stepping logic; climbing needs a trained policy")


if __name__ == "__main__":
    reconstruction()
    climb()
