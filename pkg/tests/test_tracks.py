from __future__ import annotations

import numpy as np
import pytest

from crlnav.geo import GeoPoint, great_circle_distance, initial_bearing
from crlnav.tracks import TrafficTrack, Trajectory, read_trajectories, write_trajectories


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        Trajectory(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Trajectory(np.array([[0, 0, 1], [np.nan, 0, 1]]))
    with pytest.raises(ValueError):
        Trajectory(np.zeros((2, 3)), timestep=0)


def test_state_interpolation():
    tr = TrafficTrack(Trajectory(np.array([[10.0, 65.0, 10.0], [10.1, 65.0, 14.0], [10.2, 65.1, 14.0]]), 0.5),
                      start_offset=1.0)
    assert tr.state_at(0.99) is None and tr.state_at(2.01) is None
    k = tr.state_at(1.25)
    assert k.position.lat == pytest.approx(10.05) and k.sog == pytest.approx(12.0)
    assert k.cog == pytest.approx(0.0, abs=1e-9)
    end = tr.state_at(2.0)
    assert end.position.lat == pytest.approx(10.2)
    assert end.cog == pytest.approx(initial_bearing(GeoPoint(10.1, 65.0), GeoPoint(10.2, 65.1)))


def test_interpolation_across_antimeridian():
    tr = TrafficTrack(Trajectory(np.array([[0.0, 179.9, 10.0], [0.0, -179.9, 10.0]]), 1.0))
    k = tr.state_at(0.5)
    assert abs(abs(k.position.lon) - 180.0) < 1e-9
    assert great_circle_distance(k.position, GeoPoint(0, 179.9)) == pytest.approx(6.0, rel=1e-6)


def test_csv_roundtrip(tmp_path):
    a = Trajectory(np.random.default_rng(0).uniform(0, 10, (5, 3)), 0.5, "a")
    b = Trajectory(np.random.default_rng(1).uniform(0, 10, (3, 3)), 0.5, "b")
    p = tmp_path / "t.csv"
    write_trajectories(p, [a, b])
    back = {t.traj_id: t for t in read_trajectories(p)}
    assert np.array_equal(back["a"].points, a.points) and np.array_equal(back["b"].points, b.points)


def test_csv_errors(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("trajectory_id,index,lat\n")
    with pytest.raises(ValueError, match="missing"):
        read_trajectories(p)
    p.write_text("trajectory_id,index,lat,lon,sog\na,0,1,1,1\na,2,1,1,1\n")
    with pytest.raises(ValueError, match="indices"):
        read_trajectories(p)
    p.write_text("trajectory_id,index,lat,lon,sog\na,0,x,1,1\n")
    with pytest.raises(ValueError, match=":2:"):
        read_trajectories(p)
