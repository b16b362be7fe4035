"""Built-in synthetic data: a fuel-rate law, operational records, and great-circle traffic legs.

No real AIS or fuel data ships with the package; these generators stand in for
them in tests, demos and the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .fuel import N_SHIP_TYPES, OperationalRecord
from .geo import GeoPoint, destination_point, great_circle_distance, initial_bearing

# per-ship-type additive offset in mt/hour
TYPE_OFFSETS = np.linspace(0.2, 1.3, N_SHIP_TYPES)


@dataclass(frozen=True)
class SyntheticFuelLaw:
    """fcr = a * sog^3 / gt + type offset + seasonal term (mt/hour).

    Also usable directly as the environment's fuel model.
    """

    a: float = 5.0
    seasonal_amp: float = 0.3

    def rate(self, sog, gt, ship_type, month):
        sog = np.asarray(sog, dtype=float)
        seasonal = self.seasonal_amp * np.sin(2 * np.pi * (np.asarray(month) - 1) / 12.0)
        return self.a * sog**3 / np.asarray(gt, dtype=float) + TYPE_OFFSETS[ship_type] + seasonal

    def predict_record(self, record: OperationalRecord) -> float:
        return float(self.rate(record.sog, record.gt, record.ship_type, record.month))


def fuel_dataset(n: int, rng: np.random.Generator, noise: float = 0.05,
                 law: SyntheticFuelLaw = SyntheticFuelLaw()) -> list[OperationalRecord]:
    """Random operational records labelled by ``law`` plus Gaussian noise."""
    sog = rng.uniform(4.0, 20.0, n)
    gt = rng.uniform(20_000.0, 90_000.0, n)
    loa = 100.0 + gt / 400.0 + rng.normal(0, 10, n)
    beam = loa / 6.5 + rng.normal(0, 1.5, n)
    ship_type = rng.integers(0, N_SHIP_TYPES, n)
    month = rng.integers(1, 13, n)
    day = rng.integers(1, 32, n)
    hour = rng.integers(0, 24, n)
    lat = rng.uniform(-20.0, 20.0, n)
    lon = rng.uniform(50.0, 90.0, n)
    dist = sog * rng.uniform(0.5, 1.5, n)
    fcr = law.rate(sog, gt, ship_type, month) + rng.normal(0.0, noise, n)
    return [
        OperationalRecord(float(dist[i]), float(lat[i]), float(lon[i]), float(sog[i]), float(loa[i]),
                          float(beam[i]), float(gt[i]), int(ship_type[i]), int(month[i]), int(day[i]),
                          int(hour[i]), float(fcr[i]))
        for i in range(n)
    ]


def great_circle_leg(start: GeoPoint, end: GeoPoint, n_points: int, timestep: float,
                     rng: np.random.Generator, speed_noise: float = 0.5) -> np.ndarray:
    """Sample a (lat, lon, sog) track along the great circle from ``start`` toward ``end``.

    The vessel cruises at the speed needed to cover the leg in ``n_points - 1``
    steps, perturbed per step by Gaussian noise.
    """
    total = great_circle_distance(start, end)
    cruise = total / ((n_points - 1) * timestep)
    brg = initial_bearing(start, end)
    out = np.zeros((n_points, 3))
    p = start
    sog = max(cruise + rng.normal(0, speed_noise), 0.0)
    for i in range(n_points):
        out[i] = p.lat, p.lon, sog
        if i + 1 < n_points:
            p = destination_point(p, brg, sog * timestep)
            if p != end and great_circle_distance(p, end) > 1e-9:
                brg = initial_bearing(p, end)
            sog = max(cruise + rng.normal(0, speed_noise), 0.0)
    return out


def random_traffic(bounds: tuple[float, float, float, float], n_tracks: int, n_points: int,
                   timestep: float, rng: np.random.Generator) -> list[np.ndarray]:
    """Great-circle legs between random points of a (lat_min, lat_max, lon_min, lon_max) box."""
    lat0, lat1, lon0, lon1 = bounds
    tracks = []
    while len(tracks) < n_tracks:
        a = GeoPoint(rng.uniform(lat0, lat1), rng.uniform(lon0, lon1))
        b = GeoPoint(rng.uniform(lat0, lat1), rng.uniform(lon0, lon1))
        if great_circle_distance(a, b) < 1.0:
            continue
        tracks.append(great_circle_leg(a, b, n_points, timestep, rng))
    return tracks


def toy_scenario_dict(distance_nm: float = 20.0, current_speed: float = 1.0,
                      current_direction: float = 90.0, timestep: float = 0.5,
                      deadline_hours: float = 4.0, start_jitter_nm: float = 0.0) -> dict:
    """Scenario document for a straight open-water transit with no traffic."""
    start = GeoPoint(10.0, 65.0)
    dest = destination_point(start, 45.0, distance_nm)
    margin = distance_nm / 60.0
    lat_lo, lat_hi = min(start.lat, dest.lat) - margin, max(start.lat, dest.lat) + margin
    lon_lo, lon_hi = min(start.lon, dest.lon) - margin, max(start.lon, dest.lon) + margin
    t0 = datetime(2024, 2, 8, tzinfo=timezone.utc)
    t1 = t0 + timedelta(hours=deadline_hours)
    return {
        "version": 1,
        "start": {"lat": start.lat, "lon": start.lon},
        "destination": {"lat": dest.lat, "lon": dest.lon},
        "start_time": t0.isoformat(),
        "deadline": t1.isoformat(),
        "timestep_hours": timestep,
        "region": {"lat_min": lat_lo, "lat_max": lat_hi, "lon_min": lon_lo, "lon_max": lon_hi},
        "start_jitter_nm": start_jitter_nm,
        "self": {"loa": 180.0, "beam": 30.0, "gt": 40000.0, "ship_type": 3},
        "currents": {"uniform": {str(m): {"direction": current_direction, "speed": current_speed}
                                 for m in range(1, 13)}},
        "traffic": [],
    }
