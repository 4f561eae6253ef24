import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from saltolab.gait import (FRONT, REAR, GaitConfig, GaitState, NotSwinging, advance_phase, contact_flags,
                           mode_index, swing_progress)

TWO_PI = 2 * math.pi


def test_advance_phase_examples():
    assert advance_phase(GaitState(6.0, 2.0), 2.0, 0.01).phi == pytest.approx(6.0 + TWO_PI * 0.02)
    assert advance_phase(GaitState(6.2, 2.0), 2.0, 0.01).phi == pytest.approx(6.2 + TWO_PI * 0.02 - TWO_PI)
    s = advance_phase(GaitState(1.0, 2.0), 0.0, 0.01)
    assert s.f == 0.5 and s.phi == pytest.approx(1.0 + TWO_PI * 0.5 * 0.01)


def test_advance_phase_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        advance_phase(GaitState(), 2.0, 0.0)


@pytest.mark.parametrize("phi, flags", [(0.1, (True, False)), (2.0, (False, False)), (3.5, (False, True)),
                                        (5.0, (False, False))])
def test_contact_flags(phi, flags):
    assert contact_flags(GaitState(phi, 2.0)) == flags


def test_swing_progress_examples():
    assert swing_progress(GaitState(math.pi / 2, 2.0), FRONT) == pytest.approx(0.0)
    assert swing_progress(GaitState(TWO_PI - 1e-9, 2.0), FRONT) == pytest.approx(1.0)
    with pytest.raises(NotSwinging):
        swing_progress(GaitState(0.1, 2.0), FRONT)
    with pytest.raises(NotSwinging):
        swing_progress(GaitState(3.5, 2.0), REAR)


def test_mode_sequence_over_one_cycle():
    s, seq = GaitState(0.0, 2.0), []
    for _ in range(250):
        m = mode_index(s)
        if not seq or seq[-1] != m:
            seq.append(m)
        s = advance_phase(s, 2.0, 0.002)
    assert seq[:4] == [0, 1, 2, 3]
    assert len(seq) == 4 or seq[4] == 0


@given(phi=st.floats(0, TWO_PI, exclude_max=True), f=st.floats(-10, 10, allow_nan=False),
       dt=st.floats(1e-5, 0.05))
def test_phase_stays_in_range_and_moves_forward(phi, f, dt):
    cfg = GaitConfig()
    s = advance_phase(GaitState(phi, 2.0), f, dt)
    assert 0.0 <= s.phi < TWO_PI and cfg.f_min <= s.f <= cfg.f_max
    step = (s.phi - phi) % TWO_PI
    assert step == pytest.approx(TWO_PI * s.f * dt, abs=1e-9)


@given(phi=st.floats(0, TWO_PI, exclude_max=True))
def test_never_both_in_stance(phi):
    assert contact_flags(GaitState(phi, 2.0)) != (True, True)


@pytest.mark.parametrize("leg", [FRONT, REAR])
def test_swing_progress_monotone(leg):
    prev, s = None, GaitState(0.0, 2.0)
    for _ in range(2000):
        try:
            p = swing_progress(s, leg)
        except NotSwinging:
            prev = None
        else:
            assert 0.0 <= p <= 1.0
            if prev is not None:
                assert p >= prev and p - prev < 0.01
            prev = p
        s = advance_phase(s, 2.0, 0.0005)


def test_config_validation():
    with pytest.raises(ValueError):
        GaitConfig(mode_boundaries=(0.0, 1.0, 1.0, 2.0))
    with pytest.raises(ValueError):
        GaitConfig(f_min=2.0, f_max=1.0)
