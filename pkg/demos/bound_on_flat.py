"""One logged bounding episode on flat ground, with a few gait statistics.

    python3 demos/bound_on_flat.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from saltolab.env import DEFAULT_BOUNDING_PARAMS, DEFAULT_SCRIPTED, BoundingEnv, CsvLog, ScriptedPolicy, run_rollout
from saltolab.perception import write_depth_log


def main(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    env = BoundingEnv(DEFAULT_BOUNDING_PARAMS, seed=42)
    env.frame_log = []
    rows = []

    def sink(row):
        rows.append(row)
        log(row)

    with CsvLog(out / "rollout.csv") as log:
        summary = run_rollout(env, ScriptedPolicy(DEFAULT_SCRIPTED), 1000, sink)
    write_depth_log(out / "depth.bin", [f.depths for f in env.frame_log])
    print(summary.to_json())

    vx = np.array([r["vx"] for r in rows])
    z = np.array([r["z"] for r in rows])
    flight = np.mean([r["contact_front"] == 0 and r["contact_rear"] == 0 for r in rows])
    match = np.mean([r["contact_match"] > 0 for r in rows])
    print(f"mean forward speed {vx.mean():.2f} m/s, trunk height {z.min():.3f}..{z.max():.3f} m")
    print(f"airborne in {flight:.0%} of ticks, contact matches the schedule in {match:.0%}")
    print(f"log and depth frames in {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "out/demo_bound"))
