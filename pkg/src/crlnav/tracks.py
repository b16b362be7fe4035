"""Vessel trajectories (lat, lon, sog samples at a fixed timestep) and their CSV format.

The on-disk format is a delimited table with columns
``trajectory_id,index,lat,lon,sog``; rows of one trajectory need not be
contiguous but indices must run 0..T-1.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .geo import GeoPoint, VesselKinematics, initial_bearing, wrap_lon

COLUMNS = ("trajectory_id", "index", "lat", "lon", "sog")


@dataclass
class Trajectory:
    points: np.ndarray  # (T, 3): lat deg, lon deg, sog kn
    timestep: float = 0.5  # hours
    traj_id: str = "0"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) < 2:
            raise ValueError(f"trajectory {self.traj_id}: need a (T>=2, 3) array, got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError(f"trajectory {self.traj_id}: non-finite values")
        if self.timestep <= 0:
            raise ValueError(f"trajectory {self.traj_id}: timestep must be > 0")

    def __len__(self):
        return len(self.points)


@dataclass
class TrafficTrack:
    """A trajectory played back from ``start_offset`` hours after scenario start."""

    traj: Trajectory
    start_offset: float = 0.0
    loa: float = 200.0
    beam: float = 32.0

    def state_at(self, t: float) -> VesselKinematics | None:
        """Kinematics at ``t`` hours after scenario start, or None when not under way."""
        u = (t - self.start_offset) / self.traj.timestep
        last = len(self.traj) - 1
        if u < 0 or u > last:
            return None
        i = min(int(np.floor(u)), last - 1)
        frac = u - i
        a, b = self.traj.points[i], self.traj.points[i + 1]
        lat = a[0] + frac * (b[0] - a[0])
        lon = a[1] + frac * wrap_lon(b[1] - a[1])
        sog = max(a[2] + frac * (b[2] - a[2]), 0.0)
        pa, pb = GeoPoint(a[0], a[1]), GeoPoint(b[0], b[1])
        cog = initial_bearing(pa, pb) if pa != pb else 0.0
        return VesselKinematics(GeoPoint(lat, lon), cog, sog, sog, cog)


def read_trajectories(path: str | Path, timestep: float = 0.5) -> list[Trajectory]:
    path = Path(path)
    rows: dict[str, list[tuple[int, float, float, float]]] = defaultdict(list)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                rows[row["trajectory_id"]].append(
                    (int(row["index"]), float(row["lat"]), float(row["lon"]), float(row["sog"])))
            except ValueError as exc:
                raise ValueError(f"{path}:{line}: {exc}") from None
    out = []
    for tid, items in rows.items():
        items.sort()
        if [i for i, *_ in items] != list(range(len(items))):
            raise ValueError(f"{path}: trajectory {tid} indices are not 0..{len(items) - 1}")
        out.append(Trajectory(np.array([r[1:] for r in items]), timestep, tid))
    return out


def write_trajectories(path: str | Path, trajs: Iterable[Trajectory]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for tr in trajs:
            for i, (lat, lon, sog) in enumerate(tr.points):
                w.writerow([tr.traj_id, i, repr(float(lat)), repr(float(lon)), repr(float(sog))])
