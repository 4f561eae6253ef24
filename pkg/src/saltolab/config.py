"""Run configuration: nested dataclasses <-> JSON, dotted overrides, strict keys."""

from __future__ import annotations

import dataclasses
import json
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .env import DEFAULT_BOUNDING_PARAMS, DEFAULT_SCRIPTED, EnvConfig, EnvParams, RewardWeights, ScriptedParams
from .gait import GaitConfig
from .perception import CameraModel, MemoryConfig
from .sim import RobotParams
from .stance import StanceConfig
from .swing import SwingConfig
from .terrain import MAX_LEVEL, HeightmapConfig, InvalidLevel, RandomizationConfig, TerrainSpec

SEED_ENV_VAR = "SALTOLAB_SEED"
RESOLVED_NAME = "config.resolved.json"


class ConfigError(ValueError):
    """Unreadable, unknown or invalid configuration; the CLI maps it to exit code 2."""


@dataclass(frozen=True)
class TerrainSection:
    kind: str = "flat"
    level: int = 0
    seed: int = 0
    file: str | None = None

    def __post_init__(self):
        if self.file is None:
            TerrainSpec(self.kind, self.level, self.seed)
            if not 0 <= self.level <= MAX_LEVEL:
                raise InvalidLevel(f"level {self.level} outside [0, {MAX_LEVEL}]")


@dataclass(frozen=True)
class PolicySection:
    kind: str = "scripted"
    scripted: ScriptedParams = DEFAULT_SCRIPTED
    replay_log: str | None = None

    def __post_init__(self):
        if self.kind not in ("scripted", "replay"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "replay" and not self.replay_log:
            raise ValueError("replay policy needs policy.replay_log")


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    log: str = "rollout.csv"
    summary: str = "summary.jsonl"
    depth_log: str | None = None


@dataclass(frozen=True)
class RunConfig:
    """A full run; defaults are the tuned flat-ground bounding profile."""

    robot: RobotParams = DEFAULT_BOUNDING_PARAMS.robot
    stance: StanceConfig = DEFAULT_BOUNDING_PARAMS.stance
    swing: SwingConfig = SwingConfig()
    gait: GaitConfig = GaitConfig()
    camera: CameraModel = CameraModel()
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    heightmap: HeightmapConfig = HeightmapConfig()
    randomization: RandomizationConfig = RandomizationConfig()
    reward: RewardWeights = RewardWeights()
    env: EnvConfig = DEFAULT_BOUNDING_PARAMS.env
    terrain: TerrainSection = TerrainSection()
    policy: PolicySection = PolicySection()
    seed: int | None = None
    max_steps: int | None = None
    output: OutputSection = OutputSection()

    def env_params(self) -> EnvParams:
        return EnvParams(**{f.name: getattr(self, f.name) for f in dataclasses.fields(EnvParams)})

    def resolved_seed(self) -> int:
        return resolve_seed(self.seed)

    def steps_limit(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return int(round(self.env.timeout_s / self.env.step_dt))


def resolve_seed(seed: int | None) -> int:
    """Explicit seed, else ``$SALTOLAB_SEED``, else 0."""
    if seed is not None:
        return int(seed)
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None


# -- (de)serialization ------------------------------------------------------

def to_dict(obj) -> typing.Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    return obj


def _coerce(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return from_dict(tp, value, path)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not (isinstance(value, int)
                                           or (isinstance(value, float) and value.is_integer())):
            raise ConfigError(f"{path}: expected an integer")
        return int(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    return value


def from_dict(cls, data: dict, path: str = ""):
    """Build ``cls`` from a (possibly partial) dict; unknown keys are an error."""
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = path or "top level"
        raise ConfigError(f"unknown key(s) at {where}: {', '.join(unknown)}")
    hints = typing.get_type_hints(cls)
    kwargs = {k: _coerce(hints[k], v, f"{path}.{k}" if path else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def parse_override(text: str) -> tuple[list[str], typing.Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form a.b=c")
    key, raw = text.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return parts, value


def apply_overrides(data: dict, overrides: typing.Iterable[str], cls=RunConfig) -> dict:
    """Set dotted keys on a nested dict; keys are validated against the dataclass tree."""
    data = json.loads(json.dumps(data))
    for text in overrides:
        parts, value = parse_override(text)
        node, tp = data, cls
        for i, name in enumerate(parts):
            if not dataclasses.is_dataclass(tp):
                raise ConfigError(f"override {text!r}: {'.'.join(parts[:i])} is not a section")
            names = {f.name for f in dataclasses.fields(tp) if f.init}
            if name not in names:
                raise ConfigError(f"override {text!r}: unknown key {name!r}")
            hint = typing.get_type_hints(tp)[name]
            if i == len(parts) - 1:
                node[name] = value
                break
            tp = _dataclass_of(hint)
            if not isinstance(node.get(name), dict):
                node[name] = {}
            node = node[name]
    return data


def _dataclass_of(tp):
    if dataclasses.is_dataclass(tp):
        return tp
    for a in typing.get_args(tp):
        if dataclasses.is_dataclass(a):
            return a
    return tp


def load_config(path: str | os.PathLike | None = None, overrides: typing.Iterable[str] = ()) -> RunConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
    data = apply_overrides(data, overrides)
    return from_dict(RunConfig, data)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True)


def write_resolved(cfg: RunConfig, directory) -> Path:
    """Write the fully resolved config (seed included) next to the outputs."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cfg = dataclasses.replace(cfg, seed=cfg.resolved_seed())
    out = d / RESOLVED_NAME
    out.write_text(dump_config(cfg) + "\n")
    return out
