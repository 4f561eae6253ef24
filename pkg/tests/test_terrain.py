import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saltolab.terrain import (KINDS, MAX_LEVEL, PIT_DEPTH, CurriculumState, HeightmapConfig, InvalidLevel,
                              RandomizationConfig, TerrainProfile, TerrainSpec, apply_heightmap_shift,
                              difficulty, flat_terrain, generate_terrain, height_at, randomize_heightmap,
                              sample_heightmap, update_curriculum)

STEP = TerrainProfile(breakpoints=((-math.inf, 0.0), (1.0, 0.3)), extent=6.0)


def test_generation_is_deterministic():
    a = generate_terrain(TerrainSpec("single_gap", 0, 7))
    b = generate_terrain(TerrainSpec("single_gap", 0, 7))
    assert a.breakpoints == b.breakpoints


def test_max_step_height_is_0_6():
    t = generate_terrain(TerrainSpec("single_step", MAX_LEVEL, 0))
    assert np.max(np.abs(np.diff(t.heights))) == pytest.approx(0.6)


def test_max_gap_is_0_8_wide_pit():
    t = generate_terrain(TerrainSpec("single_gap", MAX_LEVEL, 0))
    (x0, h0), (x1, h1) = t.breakpoints[1:3]
    assert h0 == -PIT_DEPTH and h1 == 0.0
    assert x1 - x0 == pytest.approx(0.8)


def test_level_9_stairs_has_14_steps():
    t = generate_terrain(TerrainSpec("stairs", 9, 1))
    rises = np.diff(t.heights)
    assert np.sum(rises > 0) == 14
    assert rises == pytest.approx(0.20)


def test_invalid_level():
    with pytest.raises(InvalidLevel):
        generate_terrain(TerrainSpec("stairs", 99, 0))
    with pytest.raises(InvalidLevel):
        generate_terrain(TerrainSpec("stairs", -1, 0))


@pytest.mark.parametrize("kind", KINDS)
def test_difficulty_monotone_in_level(kind):
    rows = [difficulty(kind, lv) for lv in range(MAX_LEVEL + 1)]
    for key in rows[0]:
        vals = [r[key] for r in rows]
        # stone length shrinks as the task gets harder; everything else grows
        if key == "stone_length":
            vals = [-v for v in vals]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_height_at_examples():
    assert height_at(flat_terrain(), 3.7) == 0.0
    assert height_at(STEP, 1.0) == 0.3
    assert height_at(STEP, 0.999) == 0.0
    assert height_at(STEP, -50.0) == 0.0


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("level", [0, 4, MAX_LEVEL])
def test_json_round_trip_is_exact(kind, level, tmp_path):
    t = generate_terrain(TerrainSpec(kind, level, 3))
    path = tmp_path / "t.json"
    t.save(path)
    back = TerrainProfile.load(path)
    assert back == t
    assert back.to_json() == t.to_json()


def test_profile_validation():
    with pytest.raises(ValueError):
        TerrainProfile(breakpoints=((0.0, 0.0),), extent=1.0)
    with pytest.raises(ValueError):
        TerrainProfile(breakpoints=((-math.inf, 0.0), (1.0, 0.1), (1.0, 0.2)), extent=1.0)


def test_sample_heightmap_step():
    hm = sample_heightmap(STEP, 0.5)
    cfg = HeightmapConfig()
    assert len(hm.values) == cfg.n_cells
    edge = np.searchsorted(hm.centers, 1.0)
    assert np.all(hm.values[:edge] == 0.0)
    assert np.all(hm.values[edge:] == pytest.approx(0.3))


@given(base=st.floats(-5, 10, allow_nan=False), dh=st.floats(-2, 2, allow_nan=False))
def test_sample_heightmap_relative(base, dh):
    assert np.all(sample_heightmap(flat_terrain(), base).values == 0.0)
    a = sample_heightmap(STEP, base).values
    b = sample_heightmap(STEP.shifted(dh), base).values
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_randomization_identity_when_ranges_zero():
    hm = sample_heightmap(STEP, 0.5)
    out = randomize_heightmap(hm, np.random.default_rng(0), RandomizationConfig(0.0, 0.0))
    np.testing.assert_array_equal(out.values, hm.values)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(-1, 1, allow_nan=False))
def test_randomization_of_constant_map(seed, c):
    hm = sample_heightmap(flat_terrain(), 0.0)
    hm = apply_heightmap_shift(hm, 0.0, c)
    out = randomize_heightmap(hm, np.random.default_rng(seed))
    w = out.values - c
    assert np.ptp(w) < 1e-12 and abs(w[0]) <= 0.05 + 1e-12
    assert len(out.values) == len(hm.values)
    assert out.origin_x == hm.origin_x and out.cell_size == hm.cell_size


@given(u=st.floats(-0.08, 0.08), w=st.floats(-0.05, 0.05))
def test_shift_stays_within_envelope(u, w):
    hm = sample_heightmap(STEP, 0.5)
    out = apply_heightmap_shift(hm, u, w)
    # each output is some input cell at most two cells away, plus w
    assert np.all(out.values >= hm.values.min() + w - 1e-12)
    assert np.all(out.values <= hm.values.max() + w + 1e-12)


def test_curriculum():
    s = CurriculumState()
    for _ in range(20):
        s = update_curriculum(s, 6.0)
    assert s.level == 1
    s = CurriculumState()
    for _ in range(40):
        s = update_curriculum(s, 0.0)
    assert s.level == 0
    s = CurriculumState(level=MAX_LEVEL)
    for _ in range(40):
        s = update_curriculum(s, 6.0)
    assert s.level == MAX_LEVEL
