"""Sagittal depth sensing with frame latency and a geometric heightmap memory.

The camera casts ``n_rays`` rays in the sagittal plane against the exact
piecewise-constant terrain boundary (treads and vertical risers). Delayed
frames are unprojected with their capture-time pose into a world-frame grid
whose cells hold a height estimate, a confidence and an edge flag.
"""

from __future__ import annotations

import math
import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import TrunkPose
from .sim import RobotState
from .terrain import Heightmap, HeightmapConfig, TerrainProfile


class GeometryMismatch(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    mount_offset: tuple[float, float] = (0.25, 0.05)
    mount_pitch: float = -0.4
    fov: float = 1.0
    n_rays: int = 64
    max_range: float = 4.0
    noise_std: float = 0.01

    def __post_init__(self):
        if self.n_rays < 2 or not 0 < self.fov < math.pi:
            raise ValueError("camera needs n_rays >= 2 and fov in (0, pi)")

    def rays(self, pose: TrunkPose) -> tuple[np.ndarray, np.ndarray]:
        """World-frame ray origin (2,) and unit directions (n_rays, 2)."""
        origin = np.asarray(pose.p_B_W, dtype=float) + pose.R_B_W @ np.asarray(self.mount_offset)
        ang = pose.theta + self.mount_pitch + np.linspace(-0.5 * self.fov, 0.5 * self.fov, self.n_rays)
        return origin, np.column_stack([np.cos(ang), np.sin(ang)])


@dataclass(frozen=True)
class DepthFrame:
    depths: np.ndarray
    capture_pose: TrunkPose
    capture_step: int


def raycast(terrain: TerrainProfile, origin, dirs, max_range: float) -> np.ndarray:
    """Distance along each ray to the first terrain boundary hit, ``inf`` when none within range."""
    xs, hs = terrain.xs, terrain.heights
    ox, oz = float(origin[0]), float(origin[1])
    dx, dz = dirs[:, 0:1], dirs[:, 1:2]
    best = np.full(len(dirs), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        # treads: z = h_i for x in [x_i, x_{i+1})
        t = (hs[None, :] - oz) / dz
        xh = ox + t * dx
        upper = np.append(xs[1:], np.inf)[None, :]
        ok = (t > 1e-12) & (xh >= xs[None, :]) & (xh < upper)
        best = np.minimum(best, np.where(ok, t, np.inf).min(axis=1))
        if len(xs) > 1:
            # risers at x_i between h_{i-1} and h_i
            t = (xs[None, 1:] - ox) / dx
            zr = oz + t * dz
            lo = np.minimum(hs[:-1], hs[1:])[None, :]
            hi = np.maximum(hs[:-1], hs[1:])[None, :]
            ok = (t > 1e-12) & (zr >= lo) & (zr <= hi)
            best = np.minimum(best, np.where(ok, t, np.inf).min(axis=1))
    best[best > max_range] = np.inf
    return best


def render_depth(state: RobotState, terrain: TerrainProfile, cam: CameraModel,
                 rng: np.random.Generator | None = None, step: int = 0) -> DepthFrame:
    origin, dirs = cam.rays(state.pose)
    t = raycast(terrain, origin, dirs, cam.max_range)
    hit = np.isfinite(t)
    depths = np.full(cam.n_rays, cam.max_range)
    d = t[hit]
    if cam.noise_std > 0 and rng is not None:
        d = d + cam.noise_std * rng.standard_normal(d.shape)
    depths[hit] = np.clip(d, 1e-6, cam.max_range)
    pose = TrunkPose(np.array(state.pose.p_B_W, dtype=float), float(state.pose.theta))
    return DepthFrame(depths=depths, capture_pose=pose, capture_step=step)


class LatencyBuffer:
    """FIFO returning the frame captured ``delay_steps`` pushes ago (oldest frame while warming up)."""

    def __init__(self, delay_steps: int = 5):
        if delay_steps < 0:
            raise ValueError("delay_steps must be non-negative")
        self.delay_steps = delay_steps
        self._queue: deque[DepthFrame] = deque(maxlen=delay_steps + 1)

    def clear(self) -> None:
        self._queue.clear()

    def __len__(self) -> int:
        return len(self._queue)

    def push_and_fetch(self, frame: DepthFrame) -> DepthFrame:
        self._queue.append(frame)
        return self._queue[0]


def push_and_fetch(buffer: LatencyBuffer, frame: DepthFrame) -> DepthFrame:
    return buffer.push_and_fetch(frame)


def unproject(frame: DepthFrame, cam: CameraModel) -> np.ndarray:
    """World points (k, 2) of the rays that hit, in ray order."""
    origin, dirs = cam.rays(frame.capture_pose)
    hit = frame.depths < cam.max_range
    return origin + frame.depths[hit, None] * dirs[hit]


@dataclass
class MemoryConfig:
    n_cells: int = 128
    cell_size: float = 0.05
    back_margin: float = 1.0
    decay: float = 0.98
    edge_jump: float = 0.05
    edge_boost: float = 0.5
    min_confidence: float = 0.1
    riser_slope: float = 2.0


@dataclass
class HeightmapMemory:
    """World-frame rolling grid; cell ``k`` of the lattice is centered at ``anchor_x + k * cell_size``."""

    camera: CameraModel = field(default_factory=CameraModel)
    config: MemoryConfig = field(default_factory=MemoryConfig)
    anchor_x: float = 0.0
    first_index: int = 0
    step: int = 0

    def __post_init__(self):
        n = self.config.n_cells
        self.height = np.zeros(n)
        self.weight = np.zeros(n)
        self.last_update = np.full(n, -1, dtype=int)
        self.edge = np.zeros(n, dtype=bool)

    @classmethod
    def anchored(cls, base_x: float, hm_config: HeightmapConfig = HeightmapConfig(),
                 camera: CameraModel | None = None, config: MemoryConfig | None = None) -> "HeightmapMemory":
        """Memory whose lattice coincides with the heightmap window of a robot at ``base_x``."""
        config = config or MemoryConfig(cell_size=hm_config.cell_size)
        if not math.isclose(config.cell_size, hm_config.cell_size):
            raise GeometryMismatch("memory cell size must match the heightmap")
        mem = cls(camera=camera or CameraModel(), config=config, anchor_x=base_x + hm_config.x_min)
        mem.track(base_x)
        return mem

    @property
    def confidence(self) -> np.ndarray:
        """Evidence weight capped at 1; decays geometrically between observations."""
        return np.minimum(self.weight, 1.0)

    @property
    def centers(self) -> np.ndarray:
        return self.anchor_x + self.config.cell_size * (self.first_index + np.arange(self.config.n_cells))

    def index_of(self, x) -> np.ndarray:
        """Lattice index of the cell containing ``x``."""
        return np.floor((np.asarray(x, dtype=float) - self.anchor_x) / self.config.cell_size + 0.5).astype(int)

    def track(self, robot_x: float) -> None:
        """Slide the window so it starts ``back_margin`` behind the robot, clearing new cells."""
        new_first = int(self.index_of(robot_x - self.config.back_margin))
        shift = new_first - self.first_index
        if shift == 0:
            return
        n = self.config.n_cells
        for name, empty in (("height", 0.0), ("weight", 0.0), ("last_update", -1), ("edge", False)):
            arr = getattr(self, name)
            out = np.full_like(arr, empty)
            if abs(shift) < n:
                if shift > 0:
                    out[:n - shift] = arr[shift:]
                else:
                    out[-shift:] = arr[:n + shift]
            setattr(self, name, out)
        self.first_index = new_first


def _frame_observations(points: np.ndarray, mem: HeightmapMemory) -> dict[int, float]:
    """Per-cell surface height seen at each cell center in one frame.

    Consecutive steep hits spanning more than ``edge_jump`` in height form a
    riser, summarized by its x and its top. A cell takes the nearest tread
    sample or riser top at or left of its center (right-continuous hold);
    failing that, the nearest tread sample to its right with no riser between.
    """
    if len(points) == 0:
        return {}
    cfg = mem.config
    px, pz = points[:, 0], points[:, 1]
    n = len(px)
    # steep links between neighbors one or two rays apart join points into vertical runs
    link = np.zeros(max(n - 1, 0), dtype=bool)
    for gap in (1, 2):
        if n > gap:
            st = np.abs(pz[gap:] - pz[:-gap]) > cfg.riser_slope * np.abs(px[gap:] - px[:-gap])
            for g in range(gap):
                link[g:n - gap + g] |= st
    # runs of linked points: [starts[r], ends[r]] inclusive
    starts = np.flatnonzero(np.concatenate([[True], ~link]))
    ends = np.append(starts[1:] - 1, n - 1)
    span = np.maximum.reduceat(pz, starts) - np.minimum.reduceat(pz, starts)
    riser = (ends > starts) & (span > cfg.edge_jump)
    member = np.repeat(riser, ends - starts + 1)
    fx = [px[~member]]
    fz = [pz[~member]]
    for a, b in zip(starts[riser], ends[riser]):
        fx.append([np.median(px[a:b + 1])])
        fz.append([pz[a:b + 1].max()])
    fx, fz = np.concatenate(fx), np.concatenate(fz)
    is_riser = np.zeros(len(fx), dtype=bool)
    is_riser[len(fx) - int(riser.sum()):] = True
    order = np.argsort(fx, kind="stable")
    fx, fz, is_riser = fx[order], fz[order], is_riser[order]
    idx = mem.index_of(fx)
    cells = np.unique(idx)
    centers = mem.anchor_x + cfg.cell_size * cells
    # last feature at or left of each center, if it lies in that cell
    last = np.searchsorted(fx, centers + 1e-12, side="right") - 1
    first = np.searchsorted(idx, cells, side="left")
    obs: dict[int, float] = {}
    for k, li, fi in zip(cells.tolist(), last.tolist(), first.tolist()):
        if li >= 0 and idx[li] == k:
            obs[k] = float(fz[li])
        elif not is_riser[fi]:
            obs[k] = float(fz[fi])
    return obs


def integrate_frame(memory: HeightmapMemory, frame: DepthFrame) -> HeightmapMemory:
    """Fuse one (delayed) depth frame into the memory in place; returns the memory."""
    cfg = memory.config
    memory.step += 1
    memory.weight *= cfg.decay
    memory.edge[:] = False
    obs = _frame_observations(unproject(frame, memory.camera), memory)
    keys = sorted(k for k in obs if 0 <= k - memory.first_index < cfg.n_cells)
    edges = set()
    for a, b in zip(keys, keys[1:]):
        if b == a + 1 and abs(obs[a] - obs[b]) > cfg.edge_jump:
            edges.update((a, b))
    for k in keys:
        i = k - memory.first_index
        w = 1.0 + (cfg.edge_boost if k in edges else 0.0)
        c = memory.weight[i]
        memory.height[i] = (c * memory.height[i] + w * obs[k]) / (c + w)
        memory.weight[i] = c + w
        memory.last_update[i] = memory.step
        memory.edge[i] = k in edges
    return memory


def query_heightmap(memory: HeightmapMemory, base_x: float,
                    config: HeightmapConfig = HeightmapConfig(),
                    ground_z: float | None = None) -> Heightmap:
    """Heightmap window around ``base_x`` from memory, with occlusion forward-fill.

    Unconfident cells take the value of the nearest confident cell toward the
    robot (or away from it if none lies between). ``ground_z`` is the
    proprioceptive ground height under the base, used when the memory has not
    observed that cell. The returned ``confidence`` is the memory confidence of
    each sampled cell (zero below the confidence threshold).
    """
    if not math.isclose(config.cell_size, memory.config.cell_size):
        raise GeometryMismatch("heightmap and memory cell sizes differ")
    n = memory.config.n_cells
    conf_ok = memory.confidence >= memory.config.min_confidence
    height = memory.height
    origin = base_x + config.x_min
    pts = origin + config.cell_size * np.arange(config.n_cells)
    local = np.clip(memory.index_of(np.append(pts, base_x)) - memory.first_index, 0, n - 1)
    conf = np.where(conf_ok[local[:-1]], memory.confidence[local[:-1]], 0.0)
    base = int(local[-1])
    if ground_z is not None and not conf_ok[base]:
        conf_ok = conf_ok.copy()
        height = height.copy()
        conf_ok[base], height[base] = True, ground_z
    if not conf_ok.any():
        return Heightmap(values=np.zeros(config.n_cells), origin_x=origin,
                         cell_size=config.cell_size, confidence=np.zeros(config.n_cells))
    filled = _fill_toward(height, conf_ok, base)
    values = filled[local[:-1]] - filled[local[-1]]
    return Heightmap(values=values, origin_x=origin, cell_size=config.cell_size, confidence=conf)


def _fill_toward(height: np.ndarray, ok: np.ndarray, base: int) -> np.ndarray:
    """Fill unconfident cells from the nearest confident cell on the side of ``base``."""
    n = len(height)
    idx = np.arange(n)
    # nearest confident index at or before i, and at or after i
    prev = np.where(ok, idx, -1)
    prev = np.maximum.accumulate(prev)
    nxt = np.where(ok, idx, n)
    nxt = np.minimum.accumulate(nxt[::-1])[::-1]
    toward = np.where(idx > base, prev, nxt)
    away = np.where(idx > base, nxt, prev)
    src = np.where((toward >= 0) & (toward < n), toward, away)
    src = np.where(ok, idx, src)
    return height[np.clip(src, 0, n - 1)]


@dataclass
class ReconstructionMetrics:
    rms: float
    max: float
    rms_confident: float
    max_confident: float
    per_cell: np.ndarray
    n_confident: int


def reconstruction_error(estimate: Heightmap, truth: Heightmap, confident=None) -> ReconstructionMetrics:
    if (len(estimate.values) != len(truth.values) or not math.isclose(estimate.cell_size, truth.cell_size)
            or not math.isclose(estimate.origin_x, truth.origin_x, abs_tol=1e-9)):
        raise GeometryMismatch("estimate and truth heightmaps differ in geometry")
    err = np.abs(np.asarray(estimate.values) - np.asarray(truth.values))
    mask = np.ones(len(err), dtype=bool) if confident is None else np.asarray(confident, dtype=bool)
    sub = err[mask]
    return ReconstructionMetrics(
        rms=float(np.sqrt(np.mean(err ** 2))), max=float(err.max()),
        rms_confident=float(np.sqrt(np.mean(sub ** 2))) if len(sub) else 0.0,
        max_confident=float(sub.max()) if len(sub) else 0.0,
        per_cell=err, n_confident=int(mask.sum()))


def write_depth_log(path, frames) -> None:
    """Binary log: per frame a little-endian uint32 length then that many float32 depths."""
    with open(path, "wb") as fh:
        for fr in frames:
            d = np.asarray(fr.depths if isinstance(fr, DepthFrame) else fr, dtype="<f4")
            fh.write(struct.pack("<I", len(d)))
            fh.write(d.tobytes())


def read_depth_log(path) -> list[np.ndarray]:
    out = []
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0
    while pos < len(data):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        out.append(np.frombuffer(data, dtype="<f4", count=n, offset=pos).copy())
        pos += 4 * n
    return out
