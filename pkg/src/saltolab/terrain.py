"""Discontinuous 1-D terrains, heightmaps and the level curriculum."""

from __future__ import annotations

import bisect
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

KINDS = ("single_gap", "single_step", "stairs", "stepping_stones")
NUM_LEVELS = 10
MAX_LEVEL = NUM_LEVELS - 1
PIT_DEPTH = 1.0

# (level 0, max level) difficulty anchors, linear in level
GAP_WIDTH = (0.1, 0.8)
STEP_HEIGHT = (0.1, 0.6)
STAIR_RISE = (0.08, 0.20)
STONE_LENGTH = (0.8, 0.25)
STONE_GAP = (0.1, 0.5)

STAIR_RUN = 0.25
NUM_STAIRS = 14
SPAWN_LENGTH = 1.0
TERRAIN_LENGTH = 6.0


class InvalidLevel(ValueError):
    pass


@dataclass(frozen=True)
class TerrainSpec:
    kind: str
    level: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS and self.kind != "flat":
            raise ValueError(f"unknown terrain kind {self.kind!r}")


@dataclass(frozen=True)
class TerrainProfile:
    """Piecewise-constant height function.

    ``breakpoints[i] = (x_start, height)``; the first entry starts at ``-inf``.
    ``height_at`` is right-continuous at every ``x_start``.
    """

    breakpoints: tuple[tuple[float, float], ...]
    extent: float
    kind: str = "flat"
    level: int = 0
    seed: int = 0
    _xs: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _hs: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bps = tuple((float(x), float(h)) for x, h in self.breakpoints)
        if not bps or bps[0][0] != -math.inf:
            raise ValueError("first breakpoint must start at -inf")
        xs = tuple(x for x, _ in bps)
        hs = tuple(h for _, h in bps)
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("breakpoint x_start must be strictly increasing")
        if not all(math.isfinite(h) for h in hs):
            raise ValueError("heights must be finite")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_hs", hs)

    @property
    def xs(self) -> np.ndarray:
        return np.array(self._xs)

    @property
    def heights(self) -> np.ndarray:
        return np.array(self._hs)

    def shifted(self, dh: float) -> "TerrainProfile":
        return replace(self, breakpoints=tuple((x, h + dh) for x, h in self.breakpoints))

    def to_json(self) -> str:
        bps = [[None if math.isinf(x) else x, h] for x, h in self.breakpoints]
        return json.dumps({"kind": self.kind, "level": self.level, "seed": self.seed,
                           "breakpoints": bps, "extent": self.extent})

    @classmethod
    def from_json(cls, text: str) -> "TerrainProfile":
        d = json.loads(text)
        bps = tuple((-math.inf if x is None else float(x), float(h)) for x, h in d["breakpoints"])
        return cls(breakpoints=bps, extent=float(d["extent"]), kind=d["kind"],
                   level=int(d["level"]), seed=int(d["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "TerrainProfile":
        return cls.from_json(Path(path).read_text())


def flat_terrain(extent: float = TERRAIN_LENGTH) -> TerrainProfile:
    return TerrainProfile(breakpoints=((-math.inf, 0.0),), extent=extent)


def height_at(terrain: TerrainProfile, x: float) -> float:
    i = bisect.bisect_right(terrain._xs, x) - 1
    return terrain._hs[i]


def heights_at(terrain: TerrainProfile, xs) -> np.ndarray:
    """Vectorized ``height_at``."""
    idx = np.searchsorted(terrain.xs, np.asarray(xs, dtype=float), side="right") - 1
    return terrain.heights[idx]


def _lerp(bounds: tuple[float, float], level: int) -> float:
    a, b = bounds
    return a + (b - a) * level / MAX_LEVEL


def difficulty(kind: str, level: int) -> dict[str, float]:
    """Difficulty parameters of a terrain family at a curriculum level."""
    if kind == "single_gap":
        return {"gap_width": _lerp(GAP_WIDTH, level)}
    if kind == "single_step":
        return {"step_height": _lerp(STEP_HEIGHT, level)}
    if kind == "stairs":
        return {"rise": _lerp(STAIR_RISE, level), "run": STAIR_RUN}
    if kind == "stepping_stones":
        return {"stone_length": _lerp(STONE_LENGTH, level), "stone_gap": _lerp(STONE_GAP, level)}
    return {}


def generate_terrain(spec: TerrainSpec) -> TerrainProfile:
    """Deterministic profile for ``spec``; the seed only jitters feature placement."""
    if not (0 <= spec.level <= MAX_LEVEL) or int(spec.level) != spec.level:
        raise InvalidLevel(f"level {spec.level} outside [0, {MAX_LEVEL}]")
    rng = np.random.default_rng(spec.seed)
    start = SPAWN_LENGTH + float(rng.uniform(0.0, 0.25))
    d = difficulty(spec.kind, spec.level)
    bps: list[tuple[float, float]] = [(-math.inf, 0.0)]
    extent = TERRAIN_LENGTH

    if spec.kind == "single_gap":
        bps += [(start, -PIT_DEPTH), (start + d["gap_width"], 0.0)]
    elif spec.kind == "single_step":
        bps += [(start, d["step_height"])]
    elif spec.kind == "stairs":
        for i in range(NUM_STAIRS):
            bps.append((start + i * d["run"], (i + 1) * d["rise"]))
        extent = max(extent, start + NUM_STAIRS * d["run"] + 1.0)
    elif spec.kind == "stepping_stones":
        x = start
        while x < extent:
            gap = d["stone_gap"] * float(rng.uniform(0.9, 1.1))
            bps.append((x, -PIT_DEPTH))
            bps.append((x + gap, 0.0))
            x += gap + d["stone_length"]
    return TerrainProfile(breakpoints=tuple(bps), extent=extent, kind=spec.kind,
                          level=spec.level, seed=spec.seed)


@dataclass(frozen=True)
class HeightmapConfig:
    n_cells: int = 32
    x_min: float = -0.2
    cell_size: float = 0.05

    def __post_init__(self):
        if self.n_cells < 1 or self.cell_size <= 0:
            raise ValueError("heightmap needs n_cells >= 1 and cell_size > 0")


@dataclass(frozen=True)
class Heightmap:
    """Heights relative to the ground under the base; ``origin_x`` is the first cell center."""

    values: np.ndarray
    origin_x: float
    cell_size: float
    confidence: np.ndarray | None = None

    @property
    def low_confidence(self) -> bool:
        return self.confidence is not None and not np.any(self.confidence > 0)

    @property
    def centers(self) -> np.ndarray:
        return self.origin_x + self.cell_size * np.arange(len(self.values))


def sample_heightmap(terrain: TerrainProfile, base_x: float,
                     config: HeightmapConfig = HeightmapConfig()) -> Heightmap:
    origin = base_x + config.x_min
    centers = origin + config.cell_size * np.arange(config.n_cells)
    values = heights_at(terrain, centers) - height_at(terrain, base_x)
    return Heightmap(values=values, origin_x=origin, cell_size=config.cell_size)


@dataclass(frozen=True)
class RandomizationConfig:
    shift_x: float = 0.08
    shift_z: float = 0.05


def randomize_heightmap(hm: Heightmap, rng: np.random.Generator,
                        config: RandomizationConfig = RandomizationConfig()) -> Heightmap:
    """Apply one horizontal shift (nearest-cell resampling) and one vertical offset."""
    u, w = draw_heightmap_shift(rng, config)
    return apply_heightmap_shift(hm, u, w)


def draw_heightmap_shift(rng: np.random.Generator,
                         config: RandomizationConfig = RandomizationConfig()) -> tuple[float, float]:
    """One (horizontal, vertical) shift pair, uniform within the configured ranges."""
    u = float(rng.uniform(-config.shift_x, config.shift_x)) if config.shift_x > 0 else 0.0
    w = float(rng.uniform(-config.shift_z, config.shift_z)) if config.shift_z > 0 else 0.0
    return u, w


def apply_heightmap_shift(hm: Heightmap, u: float, w: float) -> Heightmap:
    """Observed value at cell i is the input sampled at ``center_i + u``, plus ``w``."""
    n = len(hm.values)
    src = np.clip(np.rint(np.arange(n) + u / hm.cell_size), 0, n - 1).astype(int)
    return Heightmap(values=hm.values[src] + w, origin_x=hm.origin_x, cell_size=hm.cell_size,
                     confidence=None if hm.confidence is None else hm.confidence[src])


@dataclass
class CurriculumState:
    level: int = 0
    recent_distances: deque = field(default_factory=lambda: deque(maxlen=20))
    max_level: int = MAX_LEVEL

    def __post_init__(self):
        if not (0 <= self.level <= self.max_level):
            raise InvalidLevel(f"level {self.level} outside [0, {self.max_level}]")


def update_curriculum(state: CurriculumState, episode_distance: float,
                      terrain_extent: float = TERRAIN_LENGTH,
                      promotion_fraction: float = 0.8) -> CurriculumState:
    """Record an episode; promote one level once the median of a full window clears the bar.

    The distance window is cleared on promotion so the next level is judged on its own episodes.
    """
    window = deque(state.recent_distances, maxlen=state.recent_distances.maxlen)
    window.append(float(episode_distance))
    level = state.level
    if (len(window) == window.maxlen and level < state.max_level
            and float(np.median(window)) >= promotion_fraction * terrain_extent):
        level += 1
        window.clear()
    return CurriculumState(level=level, recent_distances=window, max_level=state.max_level)
