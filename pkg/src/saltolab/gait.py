"""Bounding gait phase machine: front stance, flight, rear stance, flight."""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi
FRONT, REAR = 0, 1
MODES = ("front_stance", "flight", "rear_stance", "flight")


class NotSwinging(ValueError):
    pass


@dataclass(frozen=True)
class GaitConfig:
    """Phase boundaries ``(b0, b1, b2, b3)``; mode i spans ``[b_i, b_{i+1})`` with ``b4 = b0 + 2pi``."""

    mode_boundaries: tuple[float, float, float, float] = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)
    f_min: float = 0.5
    f_max: float = 3.5

    def __post_init__(self):
        b = self.mode_boundaries
        if len(b) != 4:
            raise ValueError("bounding gait needs exactly 4 modes")
        if not all(0.0 <= x < TWO_PI for x in b) or any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("mode boundaries must be increasing within [0, 2pi)")
        if not 0 < self.f_min <= self.f_max:
            raise ValueError("need 0 < f_min <= f_max")

    def stance_window(self, leg: int) -> tuple[float, float]:
        b = self.mode_boundaries
        return (b[0], b[1]) if leg == FRONT else (b[2], b[3])

    def swing_window(self, leg: int) -> tuple[float, float]:
        """(start, length) of the leg's swing window, possibly wrapping past 2pi."""
        lo, hi = self.stance_window(leg)
        return hi, TWO_PI - (hi - lo)


@dataclass(frozen=True)
class GaitState:
    phi: float = 0.0
    f: float = 2.0


def advance_phase(state: GaitState, f_cmd: float, dt: float,
                  config: GaitConfig = GaitConfig()) -> GaitState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    f = min(max(float(f_cmd), config.f_min), config.f_max)
    return GaitState(phi=(state.phi + TWO_PI * f * dt) % TWO_PI, f=f)


def _in_window(phi: float, lo: float, hi: float) -> bool:
    return lo <= phi < hi


def mode_index(state: GaitState, config: GaitConfig = GaitConfig()) -> int:
    b = config.mode_boundaries
    phi = (state.phi - b[0]) % TWO_PI
    for i in (3, 2, 1):
        if phi >= b[i] - b[0]:
            return i
    return 0


def contact_flags(state: GaitState, config: GaitConfig = GaitConfig()) -> tuple[bool, bool]:
    """Scheduled (front_stance, rear_stance)."""
    m = mode_index(state, config)
    return m == 0, m == 2


def swing_progress(state: GaitState, leg: int, config: GaitConfig = GaitConfig()) -> float:
    if contact_flags(state, config)[leg]:
        raise NotSwinging(f"leg {leg} is in stance at phi={state.phi:.4f}")
    start, length = config.swing_window(leg)
    return min(1.0, ((state.phi - start) % TWO_PI) / length)
