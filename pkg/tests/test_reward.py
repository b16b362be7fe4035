from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlnav.reward import (DEFAULT, LATE, MOVED_AWAY, TERMINAL, CurriculumSchedule, RewardWeights,
                           fuel_penalty, goal_reward, goal_threshold, step_reward)


def test_curriculum_endpoints():
    s = CurriculumSchedule(5.0, 0.5, 1000)
    assert goal_threshold(0, s) == 5.0
    assert goal_threshold(1000, s) == 0.5
    assert goal_threshold(5000, s) == 0.5
    assert goal_threshold(500, s) == pytest.approx(2.75)


def test_curriculum_disabled_is_constant():
    s = CurriculumSchedule(5.0, 0.5, 100, enabled=False)
    assert {goal_threshold(e, s) for e in range(0, 300, 7)} == {0.5}


def test_curriculum_validation():
    with pytest.raises(ValueError):
        CurriculumSchedule(total_episodes=0)
    with pytest.raises(ValueError):
        goal_threshold(-1, CurriculumSchedule())


def test_fuel_penalty():
    assert fuel_penalty(2.0, 1000.0, 500.0) == 1.0
    with pytest.raises(ValueError):
        fuel_penalty(1.0, 0.0)


def test_case_precedence_terminal_beats_moved_away():
    r = step_reward(0.1, 0.2, 0.5, True, 0.0, 1000, 0.0)
    assert r.case == TERMINAL
    assert r.total == 30.0 + 1.5 * (0.1 - 0.2)


def test_moved_away_beats_late():
    r = step_reward(5.0, 6.0, 0.5, True, 0.0, 1000, 0.0)
    assert r.case == MOVED_AWAY and r.total == pytest.approx(-1.5 - 1.0)


def test_late_and_default():
    late = step_reward(6.0, 5.0, 0.5, True, 0.0, 1000, 0.0)
    assert late.case == LATE and late.total == pytest.approx(1.5 - 0.5)
    d = step_reward(6.0, 5.0, 0.5, False, 1.0, 1000, 0.25)
    assert d.case == DEFAULT and d.total == pytest.approx(1.5 - 0.5 - 0.25)
    assert d.fuel == pytest.approx(0.5) and d.goal == 1.0 and d.safety == 0.25


def test_custom_weights():
    w = RewardWeights(goal_weight=2.0, terminal_bonus=10.0, alpha=100.0)
    r = step_reward(3.0, 0.1, 0.5, False, 1.0, 100.0, 0.0, w)
    assert r.total == pytest.approx(10.0 + 2.0 * 2.9 - 1.0)
    assert r.alpha == 100.0


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 50), st.floats(0, 50), st.floats(0.1, 5), st.booleans(), st.floats(0, 10),
       st.floats(0, 1))
def test_total_decomposes(d_pre, d_cur, omega, late, fcr, s_t):
    r = step_reward(d_pre, d_cur, omega, late, fcr, 5000.0, s_t)
    assert r.goal == goal_reward(d_pre, d_cur)
    bonus = {TERMINAL: 30.0, MOVED_AWAY: -1.0, LATE: -0.1 * d_cur, DEFAULT: 0.0}[r.case]
    assert r.total == pytest.approx(bonus + 1.5 * r.goal - r.fuel - r.safety, abs=1e-9)
