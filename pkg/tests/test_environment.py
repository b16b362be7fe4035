from __future__ import annotations

import copy
import json
import math
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crlnav.environment import (DEADLINE, OUT_OF_REGION, REACHED, NavigationEnv, cell_of, rasterize)
from crlnav.geo import GeoPoint, VesselKinematics, destination_point, great_circle_distance, initial_bearing
from crlnav.reward import CurriculumSchedule
from crlnav.scenario import CurrentField, ScenarioError, current_at, load_scenario, parse_scenario
from crlnav.synthetic import toy_scenario_dict

T0 = datetime(2024, 2, 8, tzinfo=timezone.utc)


def kin(p, cog=0.0, sog=10.0):
    return VesselKinematics(p, cog, sog, sog, cog)


def calm_doc(**kw):
    doc = toy_scenario_dict(current_speed=0.0)
    doc.update(kw)
    return doc


# scenario loading


def test_load_minimal_file_applies_defaults(tmp_path):
    doc = toy_scenario_dict()
    for key in ("timestep_hours", "start_jitter_nm", "traffic", "self"):
        doc.pop(key)
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    sc = load_scenario(p)
    assert sc.timestep == 0.5 and sc.window_nm == 10.0 and sc.traffic == []
    assert sc.bounds.max_turn == 30.0 and sc.bounds.v_low == 4.0 and sc.bounds.v_high == 20.0
    assert sc.max_steps == 8


def test_deadline_before_start_rejected():
    doc = toy_scenario_dict()
    doc["deadline"] = doc["start_time"]
    with pytest.raises(ScenarioError, match="deadline"):
        parse_scenario(doc)


def test_missing_month_is_named():
    doc = toy_scenario_dict()
    del doc["currents"]["uniform"]["2"]
    with pytest.raises(ScenarioError, match="month 2"):
        parse_scenario(doc)


def test_start_outside_region_rejected():
    doc = toy_scenario_dict()
    doc["start"] = {"lat": 0.0, "lon": 0.0}
    with pytest.raises(ScenarioError, match="start"):
        parse_scenario(doc)


def test_bad_version_and_region():
    doc = toy_scenario_dict()
    doc["version"] = 7
    with pytest.raises(ScenarioError, match="version"):
        parse_scenario(doc)
    doc = toy_scenario_dict()
    doc["region"]["lat_min"] = 50
    with pytest.raises(ScenarioError, match="region"):
        parse_scenario(doc)


def test_traffic_from_file(tmp_path):
    from crlnav.tracks import Trajectory, write_trajectories
    pts = np.array([[10.1, 65.1, 10.0], [10.2, 65.1, 10.0], [10.3, 65.1, 10.0]])
    write_trajectories(tmp_path / "t.csv", [Trajectory(pts, 0.5, "a"), Trajectory(pts + 0.01, 0.5, "b")])
    doc = toy_scenario_dict()
    doc["traffic"] = [{"file": "t.csv", "trajectory_id": "b", "start_offset_hours": 1.0}]
    (tmp_path / "s.json").write_text(json.dumps(doc))
    sc = load_scenario(tmp_path / "s.json")
    assert len(sc.traffic) == 1 and sc.traffic[0].start_offset == 1.0
    assert sc.traffic[0].state_at(0.5) is None
    assert sc.traffic[0].state_at(1.0).position.lat == pytest.approx(10.11)


# currents


def test_uniform_current_everywhere():
    f = CurrentField.uniform((0, 1, 0, 1), {2: (90.0, 2.0)})
    for lat, lon in ((0, 0), (0.5, 0.3), (1, 1)):
        c = current_at(f, GeoPoint(lat, lon), T0)
        assert c.direction == pytest.approx(90.0) and c.speed == pytest.approx(2.0)


def test_zero_current():
    f = CurrentField.uniform((0, 1, 0, 1), {2: (0.0, 0.0)})
    assert current_at(f, GeoPoint(0.5, 0.5), T0).speed == 0.0


def test_bilinear_midpoint():
    direction = [[90.0, 90.0], [90.0, 90.0]]
    speed = [[1.0, 3.0], [1.0, 3.0]]
    f = CurrentField.from_tables([0.0, 1.0], [0.0, 1.0], {2: (direction, speed)})
    c = current_at(f, GeoPoint(0.5, 0.5), T0)
    e, n = c.components()
    assert e == pytest.approx(2.0) and n == pytest.approx(0.0, abs=1e-12)


def test_current_outside_grid_and_missing_month():
    f = CurrentField.uniform((0, 1, 0, 1), {2: (0.0, 1.0)})
    with pytest.raises(ScenarioError):
        current_at(f, GeoPoint(2, 0.5), T0)
    with pytest.raises(ScenarioError, match="month 3"):
        current_at(f, GeoPoint(0.5, 0.5), datetime(2024, 3, 1, tzinfo=timezone.utc))


# raster


def test_empty_raster():
    r = rasterize([], kin(GeoPoint(10, 65)))
    assert r.shape == (64, 64, 3) and not r.any()


def test_target_one_nm_north():
    own = kin(GeoPoint(10, 65))
    tgt = kin(destination_point(own.position, 0.0, 1.0), cog=90.0, sog=15.0)
    r = rasterize([tgt], own, 10.0)
    rows, cols = np.nonzero(r[:, :, 0])
    # half = 5 nm, cell = 10/64; north +1 -> row floor(4/cell) = 25, col floor(5/cell) = 32
    assert rows.tolist() == [25] and cols.tolist() == [32]
    assert r[25, 32, 1] == pytest.approx(0.5) and r[25, 32, 2] == pytest.approx(0.25)


def test_target_outside_window_ignored():
    own = kin(GeoPoint(10, 65))
    tgt = kin(destination_point(own.position, 0.0, 8.0))
    assert not rasterize([tgt], own, 10.0).any()


def test_nearest_vessel_wins_shared_cell():
    own = kin(GeoPoint(10, 65))
    near = kin(destination_point(own.position, 0.0, 1.00), sog=6.0)
    far = kin(destination_point(own.position, 0.0, 1.05), sog=12.0)
    assert cell_of(0, 1.0, 10) == cell_of(0, 1.05, 10)
    for order in ([near, far], [far, near]):
        r = rasterize(order, own)
        assert r[:, :, 1].max() == pytest.approx(6.0 / 30.0)


def test_sog_channel_saturates():
    own = kin(GeoPoint(10, 65))
    r = rasterize([kin(destination_point(own.position, 90.0, 1.0), sog=45.0)], own)
    assert r[:, :, 1].max() == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 360), st.floats(0, 7), st.floats(0, 359.9), st.floats(0, 40)),
                max_size=12))
def test_raster_channels_zero_off_occupancy(targets):
    own = kin(GeoPoint(-20, 170))
    tr = [kin(destination_point(own.position, b, d), c, s) for b, d, c, s in targets]
    r = rasterize(tr, own)
    off = r[:, :, 0] == 0
    assert not r[off][:, 1:].any()
    assert set(np.unique(r[:, :, 0])) <= {0.0, 1.0}
    assert r[:, :, 1].max() <= 1.0 and r[:, :, 2].max() < 1.0


# environment


def test_reset_contract():
    sc = parse_scenario(toy_scenario_dict())
    env = NavigationEnv(sc, curriculum=CurriculumSchedule(5.0, 0.5, 100))
    s1, s2 = env.reset(0)
    assert env.omega == 5.0
    assert s1.shape == (9,) and s2.shape == (64, 64, 3)
    assert env.heading == pytest.approx(initial_bearing(sc.start, sc.destination))
    assert env.d_cur == great_circle_distance(sc.start, sc.destination)
    assert env.clock == sc.start_time
    a1, a2 = env.reset(0)
    assert np.array_equal(a1, s1) and np.array_equal(a2, s2)
    for k in (4, 6):
        assert s1[k] ** 2 + s1[k + 1] ** 2 == pytest.approx(1.0, abs=1e-9)


def test_heading_encoding_and_speed_slot():
    sc = parse_scenario(calm_doc())
    env = NavigationEnv(sc)
    env.reset(3)
    env.heading = 60.0
    out = env.step(30.0, 11.0)
    assert env.heading == 90.0
    assert out.s1[4] == pytest.approx(1.0) and out.s1[5] == pytest.approx(0.0, abs=1e-12)
    assert out.s1[8] == 11.0


def test_heading_increment_and_clamp():
    sc = parse_scenario(calm_doc())
    env = NavigationEnv(sc)
    env.reset(0)
    env.heading = 10.0
    env.step(5.0, 10.0)
    assert env.heading == 15.0
    env.step(40.0, 50.0)
    assert env.heading == 45.0 and env.stw == 20.0
    env.step(-100.0, 0.0)
    assert env.heading == 15.0 and env.stw == 4.0


def test_reached_on_first_step_inside_radius():
    # 20 nm, no current, straight at 16 kn: distances 12, 4 -> reached when < 5 nm on step 2
    sc = parse_scenario(calm_doc())
    env = NavigationEnv(sc, curriculum=CurriculumSchedule(5.0, 0.5, 100))
    env.reset(0)
    o1 = env.step(0.0, 16.0)
    assert not o1.done and o1.d_cur == pytest.approx(12.0, abs=1e-4)
    o2 = env.step(0.0, 16.0)
    assert o2.done and o2.reason == REACHED and o2.d_cur == pytest.approx(4.0, abs=1e-4)
    assert o2.reward.case == "terminal"
    with pytest.raises(RuntimeError):
        env.step(0.0, 10.0)


def test_deadline_termination_and_episode_length():
    sc = parse_scenario(calm_doc())
    env = NavigationEnv(sc, curriculum=CurriculumSchedule(0.5, 0.5, 1))
    env.reset(0)
    steps = 0
    out = None
    while not env.done:
        out = env.step(30.0, 4.0)  # circle slowly
        steps += 1
        assert 0.0 <= env.heading < 360.0
    assert out.reason == DEADLINE and steps == sc.max_steps


def test_out_of_region_penalty():
    sc = parse_scenario(calm_doc())
    env = NavigationEnv(sc)
    env.reset(0)
    env.heading = 225.0  # head away from the goal, out of the box
    reasons = []
    while not env.done:
        out = env.step(0.0, 20.0)
        reasons.append(out.reason)
    assert reasons[-1] == OUT_OF_REGION
    assert out.reward.extra == -30.0
    assert out.reward.total == pytest.approx(1.5 * out.reward.goal - out.reward.fuel - 1.0 - 30.0)


def test_current_drift_moves_vessel():
    sc = parse_scenario(toy_scenario_dict(current_speed=2.0, current_direction=90.0))
    env = NavigationEnv(sc)
    env.reset(0)
    env.heading = 0.0
    out = env.step(0.0, 10.0)
    assert out.kin.sog == pytest.approx(math.hypot(10, 2))
    assert out.kin.cog == pytest.approx(math.degrees(math.atan2(2, 10)))


def test_start_jitter_is_seeded():
    sc = parse_scenario(toy_scenario_dict(start_jitter_nm=1.0))
    a = NavigationEnv(sc, seed=4)
    b = NavigationEnv(sc, seed=4)
    pa = [a.reset(e)[0][:2].copy() for e in range(5)]
    pb = [b.reset(e)[0][:2].copy() for e in range(5)]
    assert all(np.array_equal(x, y) for x, y in zip(pa, pb))
    assert len({tuple(x) for x in pa}) == 5
    for e in range(5):
        a.reset(e)
        assert great_circle_distance(a.position, sc.start) <= 1.0 + 1e-9


def test_traffic_drives_safety_score():
    doc = calm_doc()
    sc0 = parse_scenario(doc)
    # a target sitting on the own ship's track one step ahead, heading back toward it
    ahead = destination_point(sc0.start, initial_bearing(sc0.start, sc0.destination), 5.0)
    back = destination_point(ahead, initial_bearing(sc0.start, sc0.destination), 5.0)
    doc = copy.deepcopy(doc)
    doc["traffic"] = [{"points": [[back.lat, back.lon, 10.0], [sc0.start.lat, sc0.start.lon, 10.0]],
                       "timestep_hours": 1.0}]
    sc = parse_scenario(doc)
    env = NavigationEnv(sc)
    s1, s2 = env.reset(0)
    out = env.step(0.0, 10.0)
    assert out.s2[:, :, 0].sum() == 1.0
    assert out.reward.safety > 0.5
