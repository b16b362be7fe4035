"""Spherical-earth geodesy and vessel motion under ocean currents.

All public functions take and return degrees; trigonometry is done in radians.
The earth radius is chosen so that one degree of arc is exactly 60 nm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_NM = 3437.7468
NM_PER_DEGREE = EARTH_RADIUS_NM * math.pi / 180.0


def wrap_lon(lon: float) -> float:
    """Wrap a longitude into [-180, 180)."""
    return (lon + 180.0) % 360.0 - 180.0


def norm_angle(deg: float) -> float:
    """Normalize an angle into [0, 360)."""
    a = deg % 360.0
    # -1e-17 % 360 rounds to 360.0
    return 0.0 if a >= 360.0 else a


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        object.__setattr__(self, "lon", wrap_lon(self.lon))


@dataclass(frozen=True)
class CurrentVector:
    """Ocean current flowing *toward* ``direction`` (degrees true) at ``speed`` knots."""

    direction: float
    speed: float

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"current speed must be >= 0, got {self.speed}")
        object.__setattr__(self, "direction", norm_angle(self.direction))

    @classmethod
    def from_components(cls, east: float, north: float) -> "CurrentVector":
        speed = math.hypot(east, north)
        if speed == 0.0:
            return cls(0.0, 0.0)
        return cls(math.degrees(math.atan2(east, north)), speed)

    def components(self) -> tuple[float, float]:
        """(east, north) in knots."""
        r = math.radians(self.direction)
        return self.speed * math.sin(r), self.speed * math.cos(r)


CALM = CurrentVector(0.0, 0.0)


@dataclass(frozen=True)
class VesselKinematics:
    position: GeoPoint
    heading: float
    stw: float
    sog: float
    cog: float

    def velocity(self) -> tuple[float, float]:
        """Over-ground velocity (east, north) in knots."""
        r = math.radians(self.cog)
        return self.sog * math.sin(r), self.sog * math.cos(r)


def great_circle_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance in nautical miles."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dphi = p2 - p1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_NM * math.asin(min(1.0, math.sqrt(h)))


def initial_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Forward azimuth from ``a`` to ``b``, degrees clockwise from north."""
    if a == b:
        raise ValueError("bearing between coincident points is undefined")
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    x = math.sin(dlam) * math.cos(p2)
    y = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dlam)
    return norm_angle(math.degrees(math.atan2(x, y)))


def compose_over_ground(heading: float, stw: float, current: CurrentVector) -> tuple[float, float]:
    """Add the through-water velocity and the current; return (cog, sog).

    A zero resultant keeps ``heading`` as the course.
    """
    if stw < 0:
        raise ValueError(f"stw must be >= 0, got {stw}")
    heading = norm_angle(heading)
    if current.speed == 0.0:
        return heading, float(stw)
    r = math.radians(heading)
    ce, cn = current.components()
    east = stw * math.sin(r) + ce
    north = stw * math.cos(r) + cn
    sog = math.hypot(east, north)
    if sog < 1e-12:
        return heading, 0.0
    return norm_angle(math.degrees(math.atan2(east, north))), sog


def destination_point(p: GeoPoint, bearing: float, distance_nm: float) -> GeoPoint:
    delta = distance_nm / EARTH_RADIUS_NM
    theta = math.radians(bearing)
    p1 = math.radians(p.lat)
    l1 = math.radians(p.lon)
    sin_p2 = math.sin(p1) * math.cos(delta) + math.cos(p1) * math.sin(delta) * math.cos(theta)
    p2 = math.asin(max(-1.0, min(1.0, sin_p2)))
    l2 = l1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(p1),
        math.cos(delta) - math.sin(p1) * math.sin(p2),
    )
    return GeoPoint(math.degrees(p2), wrap_lon(math.degrees(l2)))


def dead_reckon(p: GeoPoint, cog: float, sog: float, dt: float) -> GeoPoint:
    """Advance ``p`` by ``sog * dt`` nm along ``cog`` on the sphere."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    dist = sog * dt
    if dist == 0.0:
        return p
    return destination_point(p, cog, dist)


def local_offset_nm(origin: GeoPoint, p: GeoPoint) -> tuple[float, float]:
    """Equirectangular (east, north) offset of ``p`` from ``origin`` in nm."""
    dlon = wrap_lon(p.lon - origin.lon)
    east = dlon * NM_PER_DEGREE * math.cos(math.radians(origin.lat))
    north = (p.lat - origin.lat) * NM_PER_DEGREE
    return east, north
