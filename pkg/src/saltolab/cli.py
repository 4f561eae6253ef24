"""``saltolab`` command line: terrain, run, eval, check.

Exit codes: 0 ok, 1 property failure, 2 usage or config error, 3 failed
episode under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import (ConfigError, RunConfig, TerrainSection, apply_overrides, dump_config, from_dict,
                     load_config, resolve_seed, to_dict, write_resolved)
from .env import (TIMEOUT, BoundingEnv, CsvLog, ReplayPolicy, ScriptedPolicy, actions_from_log, read_log,
                  run_rollout)
from .perception import write_depth_log
from .terrain import (KINDS, InvalidLevel, TerrainProfile, TerrainSpec, flat_terrain, generate_terrain,
                      height_at)

EXIT_OK, EXIT_PROPERTY, EXIT_USAGE, EXIT_EPISODE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_terrain(section: TerrainSection) -> TerrainProfile:
    if section.file:
        try:
            return TerrainProfile.load(section.file)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad terrain file {section.file}: {exc}") from exc
    if section.kind == "flat":
        return flat_terrain()
    return generate_terrain(TerrainSpec(section.kind, section.level, section.seed))


def _policy(cfg: RunConfig):
    if cfg.policy.kind == "replay":
        try:
            return ReplayPolicy(actions_from_log(read_log(cfg.policy.replay_log)))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"unreadable replay log {cfg.policy.replay_log}: {exc}") from exc
    return ScriptedPolicy(cfg.policy.scripted, cfg.heightmap)


def features_passed(terrain: TerrainProfile, x: float) -> int:
    """Terrain breakpoints (stair edges, gap borders) behind the robot."""
    return sum(1 for bx, _ in terrain.breakpoints[1:] if bx <= x)


# -- commands -----------------------------------------------------------------

def cmd_terrain(args) -> int:
    seed = resolve_seed(args.seed)
    section = TerrainSection(kind=args.kind, level=args.level, seed=seed)
    terrain = build_terrain(section)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    terrain.save(out)
    cfg = dataclasses.replace(RunConfig(), terrain=section, seed=seed)
    out.with_suffix(".config.json").write_text(dump_config(cfg) + "\n")
    if args.profile_csv:
        xs = np.linspace(-1.0, terrain.extent, args.profile_points)
        with open(args.profile_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "h"])
            for x in xs:
                w.writerow([repr(float(x)), repr(height_at(terrain, float(x)))])
    print(json.dumps({"terrain": str(out), "breakpoints": len(terrain.breakpoints) - 1,
                      "kind": terrain.kind, "level": terrain.level, "seed": terrain.seed}))
    return EXIT_OK


def _run_config(args) -> RunConfig:
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"seed={int(args.seed)}")
    if getattr(args, "out", None):
        overrides.append(f"output.dir={json.dumps(args.out)}")
    if getattr(args, "replay", None):
        overrides += ['policy.kind="replay"', f"policy.replay_log={json.dumps(args.replay)}"]
    return load_config(args.config, overrides)


def run_episode(cfg: RunConfig, out_dir: Path):
    """One logged episode under ``cfg``; returns the summary."""
    seed = cfg.resolved_seed()
    terrain = build_terrain(cfg.terrain)
    env = BoundingEnv(cfg.env_params(), terrain, seed)
    policy = _policy(cfg)
    if cfg.output.depth_log:
        env.frame_log = []
    with CsvLog(out_dir / cfg.output.log) as log:
        summary = run_rollout(env, policy, cfg.steps_limit(), log)
    if cfg.output.depth_log:
        write_depth_log(out_dir / cfg.output.depth_log, env.frame_log)
    with open(out_dir / cfg.output.summary, "a") as fh:
        fh.write(summary.to_json() + "\n")
    return summary


def cmd_run(args) -> int:
    cfg = _run_config(args)
    out_dir = Path(cfg.output.dir)
    write_resolved(cfg, out_dir)
    summary = run_episode(cfg, out_dir)
    print(summary.to_json())
    if args.strict and summary.termination not in (None, TIMEOUT):
        print(f"episode failed: {summary.termination}", file=sys.stderr)
        return EXIT_EPISODE
    return EXIT_OK


# evaluation suites: variant name -> overrides, over a terrain and a number of seeds
SUITES: dict[str, dict] = {
    "stairs-ablation": {
        "terrain": {"kind": "stairs", "level": 9},
        "variants": {
            "full": [],
            "no-feedback": ["stance.k_d_fb=0"],
            "approx-qp": ['stance.mode="approx"'],
            "no-saturation": ["robot.actuator.knots=[[0,0],[1000,1000]]"],
        },
    },
    "flat-bounding": {
        "terrain": {"kind": "flat"},
        "variants": {"full": ["env.timeout_s=5"]},
    },
    "empty": {"terrain": {"kind": "flat"}, "variants": {}},
}

EVAL_COLUMNS = ["suite", "variant", "terrain", "level", "seed", "distance", "steps_reached", "termination"]


def evaluate_suite(base: RunConfig, suite: str, n_seeds: int) -> list[dict]:
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    spec = SUITES[suite]
    root = base.resolved_seed()
    rows: list[dict] = []
    for variant, overrides in spec["variants"].items():
        distances, reached = [], []
        for i in range(n_seeds):
            seed = root + i
            terrain_over = [f"terrain.{k}={json.dumps(v)}" for k, v in spec["terrain"].items()]
            data = apply_overrides(to_dict(base), overrides + terrain_over + [f"terrain.seed={seed}"])
            cfg = from_dict(RunConfig, data)
            terrain = build_terrain(cfg.terrain)
            env = BoundingEnv(cfg.env_params(), terrain, seed)
            summary = run_rollout(env, _policy(cfg), cfg.steps_limit())
            x_end = float(env.state.pose.p_B_W[0])
            n = features_passed(terrain, x_end)
            distances.append(summary.distance)
            reached.append(n)
            rows.append({"suite": suite, "variant": variant, "terrain": terrain.kind, "level": terrain.level,
                         "seed": seed, "distance": repr(float(summary.distance)), "steps_reached": n,
                         "termination": summary.termination})
        rows.append({"suite": suite, "variant": variant, "terrain": spec["terrain"]["kind"],
                     "level": spec["terrain"].get("level", 0), "seed": "median",
                     "distance": repr(float(np.median(distances))),
                     "steps_reached": repr(float(np.median(reached))), "termination": ""})
    return rows


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    out_dir = Path(cfg.output.dir)
    write_resolved(cfg, out_dir)
    rows = evaluate_suite(cfg, args.suite, args.seeds)
    path = out_dir / args.metrics
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(",".join(str(r[c]) for c in EVAL_COLUMNS))
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import SUITES as CHECK_SUITES, run_checks
    if args.subset and args.subset not in CHECK_SUITES:
        raise UsageError(f"unknown subset {args.subset!r}; choose from {', '.join(CHECK_SUITES)}")
    results = run_checks(args.subset)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.subset}/{r.name} ({r.seconds:.2f} s)", file=sys.stderr)
    report = {"passed": all(r.passed for r in results), "checks": [r.as_dict() for r in results]}
    text = json.dumps(report, indent=2)
    if args.json:
        Path(args.json).parent.mkdir(parents=True, exist_ok=True)
        Path(args.json).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK if report["passed"] else EXIT_PROPERTY


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="saltolab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("terrain", help="generate a terrain profile file")
    t.add_argument("--kind", choices=("flat",) + KINDS, required=True)
    t.add_argument("--level", type=int, default=0)
    t.add_argument("--seed", type=int, default=None, help="default: $SALTOLAB_SEED or 0")
    t.add_argument("-o", "--output", required=True)
    t.add_argument("--profile-csv", default=None, help="also write (x, h) samples as CSV")
    t.add_argument("--profile-points", type=int, default=701)
    t.set_defaults(fn=cmd_terrain)

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON run config")
        sp.add_argument("--override", action="append", metavar="A.B=C", help="repeatable")
        sp.add_argument("--seed", type=int, default=None, help="default: config, else $SALTOLAB_SEED, else 0")
        sp.add_argument("--out", default=None, help="output directory (overrides output.dir)")

    r = sub.add_parser("run", help="run one logged episode")
    common(r)
    r.add_argument("--replay", default=None, help="rollout log whose actions to replay")
    r.add_argument("--strict", action="store_true", help="exit 3 when the episode ends in a failure")
    r.set_defaults(fn=cmd_run)

    e = sub.add_parser("eval", help="evaluation sweep over seeds")
    common(e)
    e.add_argument("--suite", default="stairs-ablation", choices=sorted(SUITES))
    e.add_argument("--seeds", type=int, default=5)
    e.add_argument("--metrics", default="metrics.csv", help="file name inside the output directory")
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("check", help="run the property suites")
    c.add_argument("--subset", default=None, help="one suite, e.g. qp or perception")
    c.add_argument("--json", default=None, help="write the report here instead of stdout")
    c.set_defaults(fn=cmd_check)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidLevel as exc:
        print(f"InvalidLevel: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
