"""Scenario files and the monthly ocean-current field.

A scenario is a JSON document (``"version": 1``)::

    {
      "version": 1,
      "start": {"lat": 10.0, "lon": 65.0},
      "destination": {"lat": 10.2, "lon": 65.2},
      "start_time": "2024-02-08T00:00:00+00:00",
      "deadline": "2024-02-08T21:00:00+00:00",
      "timestep_hours": 0.5,                       # optional, default 0.5
      "region": {"lat_min": .., "lat_max": .., "lon_min": .., "lon_max": ..},
      "self": {"loa": 180, "beam": 30, "gt": 40000, "ship_type": 3},
      "currents": {
        "grid": {"lats": [...], "lons": [...]},    # ascending axes
        "months": {"2": {"direction": [[..]], "speed": [[..]]}}
      },                                            # or {"uniform": {"2": {"direction": 90, "speed": 1}}}
      "traffic": [
        {"points": [[lat, lon, sog], ...], "timestep_hours": 0.5,
         "start_offset_hours": 0, "loa": 200, "beam": 32},
        {"file": "tracks.csv", "trajectory_id": "7"}   # path relative to the scenario file
      ],
      "action_bounds": {"max_turn": 30, "v_low": 4, "v_high": 20},   # optional
      "window_nm": 10,                              # optional
      "start_jitter_nm": 0,                         # optional
      "initial_stw": 0,                             # optional
      "fuel_model": "fuel.json"                     # optional ensemble file
    }

Direction tables give the direction the current flows *toward*, degrees true.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .geo import CurrentVector, GeoPoint
from .networks import ActionBounds
from .tracks import TrafficTrack, Trajectory, read_trajectories

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    pass


@dataclass
class CurrentField:
    """Per-month gridded current, stored as (east, north) components in knots."""

    lats: np.ndarray
    lons: np.ndarray
    east: dict[int, np.ndarray]
    north: dict[int, np.ndarray]

    @classmethod
    def from_tables(cls, lats, lons, months: dict[int, tuple[np.ndarray, np.ndarray]]) -> "CurrentField":
        """Build from per-month (direction, speed) grids shaped (len(lats), len(lons))."""
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        if len(lats) < 2 or len(lons) < 2 or np.any(np.diff(lats) <= 0) or np.any(np.diff(lons) <= 0):
            raise ScenarioError("currents.grid: lats and lons need >= 2 strictly ascending values")
        east, north = {}, {}
        for m, (direction, speed) in months.items():
            direction = np.asarray(direction, dtype=float)
            speed = np.asarray(speed, dtype=float)
            if direction.shape != (len(lats), len(lons)) or speed.shape != direction.shape:
                raise ScenarioError(f"currents month {m}: tables must have shape ({len(lats)}, {len(lons)})")
            if np.any(speed < 0) or not np.all(np.isfinite(speed)) or not np.all(np.isfinite(direction)):
                raise ScenarioError(f"currents month {m}: speeds must be finite and >= 0")
            r = np.radians(direction)
            east[m] = speed * np.sin(r)
            north[m] = speed * np.cos(r)
        return cls(lats, lons, east, north)

    @classmethod
    def uniform(cls, bounds: tuple[float, float, float, float],
                months: dict[int, tuple[float, float]]) -> "CurrentField":
        lat0, lat1, lon0, lon1 = bounds
        return cls.from_tables([lat0, lat1], [lon0, lon1],
                               {m: (np.full((2, 2), d), np.full((2, 2), s)) for m, (d, s) in months.items()})

    def months(self) -> set[int]:
        return set(self.east)

    def covers(self, lat: float, lon: float) -> bool:
        return self.lats[0] <= lat <= self.lats[-1] and self.lons[0] <= lon <= self.lons[-1]


def current_at(field_: CurrentField, p: GeoPoint, time: datetime) -> CurrentVector:
    """Bilinear interpolation of the month's (east, north) current at ``p``."""
    if time.month not in field_.east:
        raise ScenarioError(f"no current table for month {time.month}")
    if not field_.covers(p.lat, p.lon):
        raise ScenarioError(f"point ({p.lat:.5f}, {p.lon:.5f}) lies outside the current grid")
    lats, lons = field_.lats, field_.lons
    i = min(int(np.searchsorted(lats, p.lat, side="right")) - 1, len(lats) - 2)
    j = min(int(np.searchsorted(lons, p.lon, side="right")) - 1, len(lons) - 2)
    fy = (p.lat - lats[i]) / (lats[i + 1] - lats[i])
    fx = (p.lon - lons[j]) / (lons[j + 1] - lons[j])

    def interp(g):
        return ((1 - fy) * ((1 - fx) * g[i, j] + fx * g[i, j + 1])
                + fy * ((1 - fx) * g[i + 1, j] + fx * g[i + 1, j + 1]))

    return CurrentVector.from_components(interp(field_.east[time.month]), interp(field_.north[time.month]))


@dataclass
class SelfParticulars:
    loa: float = 180.0
    beam: float = 30.0
    gt: float = 40000.0
    ship_type: int = 0


@dataclass
class Scenario:
    start: GeoPoint
    destination: GeoPoint
    start_time: datetime
    deadline: datetime
    region: tuple[float, float, float, float]  # lat_min, lat_max, lon_min, lon_max
    current_field: CurrentField
    timestep: float = 0.5
    traffic: list[TrafficTrack] = field(default_factory=list)
    particulars: SelfParticulars = field(default_factory=SelfParticulars)
    bounds: ActionBounds = field(default_factory=ActionBounds)
    window_nm: float = 10.0
    start_jitter_nm: float = 0.0
    initial_stw: float = 0.0
    fuel_model_path: Path | None = None

    def __post_init__(self):
        if self.deadline <= self.start_time:
            raise ScenarioError("deadline must be later than start_time")
        if self.timestep <= 0:
            raise ScenarioError("timestep_hours must be > 0")
        if self.window_nm <= 0:
            raise ScenarioError("window_nm must be > 0")
        for name, p in (("start", self.start), ("destination", self.destination)):
            if not self.in_region(p):
                raise ScenarioError(f"{name} lies outside the scenario region")
        missing = sorted(self.months_spanned() - self.current_field.months())
        if missing:
            raise ScenarioError(f"currents: missing table for month {', '.join(map(str, missing))}")
        lat0, lat1, lon0, lon1 = self.region
        for lat, lon in ((lat0, lon0), (lat1, lon1)):
            if not self.current_field.covers(lat, lon):
                raise ScenarioError("currents: grid does not cover the scenario region")

    @property
    def horizon_hours(self) -> float:
        return (self.deadline - self.start_time).total_seconds() / 3600.0

    @property
    def max_steps(self) -> int:
        return math.ceil(self.horizon_hours / self.timestep - 1e-9)

    def in_region(self, p: GeoPoint) -> bool:
        lat0, lat1, lon0, lon1 = self.region
        return lat0 <= p.lat <= lat1 and lon0 <= p.lon <= lon1

    def months_spanned(self) -> set[int]:
        months = set()
        t = self.start_time
        while t <= self.deadline:
            months.add(t.month)
            t += timedelta(days=1)
        months.add(self.deadline.month)
        return months


def _parse_time(value: Any, name: str) -> datetime:
    if not isinstance(value, str):
        raise ScenarioError(f"{name}: expected an ISO-8601 timestamp string")
    try:
        t = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        raise ScenarioError(f"{name}: cannot parse timestamp {value!r}") from None
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


def _point(doc: dict, name: str) -> GeoPoint:
    try:
        return GeoPoint(float(doc[name]["lat"]), float(doc[name]["lon"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{name}: expected {{lat, lon}} ({exc})") from None


def _parse_currents(doc: Any, region) -> CurrentField:
    if not isinstance(doc, dict):
        raise ScenarioError("currents: missing or not an object")
    if "uniform" in doc:
        months = {}
        for m, v in doc["uniform"].items():
            try:
                months[int(m)] = (float(v["direction"]), float(v["speed"]))
            except (KeyError, TypeError, ValueError):
                raise ScenarioError(f"currents.uniform.{m}: expected {{direction, speed}}") from None
            if months[int(m)][1] < 0:
                raise ScenarioError(f"currents.uniform.{m}: speed must be >= 0")
        return CurrentField.uniform(region, months)
    try:
        grid = doc["grid"]
        tables = {int(m): (v["direction"], v["speed"]) for m, v in doc["months"].items()}
        return CurrentField.from_tables(grid["lats"], grid["lons"], tables)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"currents: expected 'uniform' or 'grid' + 'months' ({exc!r})") from None


def _parse_traffic(items: Any, base: Path, default_dt: float) -> list[TrafficTrack]:
    if items is None:
        return []
    if not isinstance(items, list):
        raise ScenarioError("traffic: expected a list")
    out = []
    for k, item in enumerate(items):
        try:
            dt = float(item.get("timestep_hours", default_dt))
            offset = float(item.get("start_offset_hours", 0.0))
            loa = float(item.get("loa", 200.0))
            beam = float(item.get("beam", 32.0))
            if "points" in item:
                trajs = [Trajectory(np.asarray(item["points"], dtype=float), dt, str(item.get("id", k)))]
            elif "file" in item:
                trajs = read_trajectories(base / item["file"], dt)
                if "trajectory_id" in item:
                    trajs = [t for t in trajs if t.traj_id == str(item["trajectory_id"])]
                    if not trajs:
                        raise ScenarioError(f"trajectory {item['trajectory_id']} not found in {item['file']}")
            else:
                raise ScenarioError("expected 'points' or 'file'")
        except ScenarioError as exc:
            raise ScenarioError(f"traffic[{k}]: {exc}") from None
        except (TypeError, ValueError, AttributeError, OSError) as exc:
            raise ScenarioError(f"traffic[{k}]: {exc}") from None
        out.extend(TrafficTrack(t, offset, loa, beam) for t in trajs)
    return out


def parse_scenario(doc: dict, base: Path = Path(".")) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"version: unsupported schema version {version}")
    try:
        r = doc["region"]
        region = (float(r["lat_min"]), float(r["lat_max"]), float(r["lon_min"]), float(r["lon_max"]))
    except (KeyError, TypeError, ValueError):
        raise ScenarioError("region: expected {lat_min, lat_max, lon_min, lon_max}") from None
    if region[0] >= region[1] or region[2] >= region[3]:
        raise ScenarioError("region: minimum must be below maximum")
    dt = float(doc.get("timestep_hours", 0.5))
    sp = doc.get("self", {})
    try:
        particulars = SelfParticulars(float(sp.get("loa", 180.0)), float(sp.get("beam", 30.0)),
                                      float(sp.get("gt", 40000.0)), int(sp.get("ship_type", 0)))
    except (TypeError, ValueError):
        raise ScenarioError("self: loa, beam, gt must be numbers and ship_type an integer") from None
    if particulars.gt <= 0:
        raise ScenarioError("self.gt: gross tonnage must be > 0")
    ab = doc.get("action_bounds", {})
    bounds = ActionBounds(float(ab.get("max_turn", 30.0)), float(ab.get("v_low", 4.0)),
                          float(ab.get("v_high", 20.0)))
    if bounds.max_turn <= 0 or not 0 <= bounds.v_low < bounds.v_high:
        raise ScenarioError("action_bounds: need max_turn > 0 and 0 <= v_low < v_high")
    fuel = doc.get("fuel_model")
    return Scenario(
        start=_point(doc, "start"),
        destination=_point(doc, "destination"),
        start_time=_parse_time(doc.get("start_time"), "start_time"),
        deadline=_parse_time(doc.get("deadline"), "deadline"),
        region=region,
        current_field=_parse_currents(doc.get("currents"), region),
        timestep=dt,
        traffic=_parse_traffic(doc.get("traffic"), base, dt),
        particulars=particulars,
        bounds=bounds,
        window_nm=float(doc.get("window_nm", 10.0)),
        start_jitter_nm=float(doc.get("start_jitter_nm", 0.0)),
        initial_stw=float(doc.get("initial_stw", 0.0)),
        fuel_model_path=(base / fuel) if fuel else None,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    return parse_scenario(doc, path.parent)
