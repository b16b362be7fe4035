"""Collision-risk geometry: DCPA/TCPA, safe passing distance and step safety score."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .geo import VesselKinematics, local_offset_nm

METERS_PER_NM = 1852.0


@dataclass(frozen=True)
class CpaResult:
    dcpa: float  # nm
    tcpa: float  # hours, negative when the closest approach is in the past


@dataclass(frozen=True)
class SafetyConfig:
    tau: float = 4.0
    t_max: float = 0.25

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.t_max <= 0:
            raise ValueError("t_max must be > 0")


@dataclass(frozen=True)
class Vessel:
    """Kinematics plus hull dimensions (meters)."""

    kin: VesselKinematics
    loa: float
    beam: float


def cpa_planar(p: tuple[float, float], v: tuple[float, float]) -> CpaResult:
    """CPA for relative position ``p`` (nm) and relative velocity ``v`` (kn)."""
    vv = v[0] * v[0] + v[1] * v[1]
    if math.sqrt(vv) < 1e-9:
        tcpa = 0.0
    else:
        tcpa = -(p[0] * v[0] + p[1] * v[1]) / vv
    return CpaResult(math.hypot(p[0] + v[0] * tcpa, p[1] + v[1] * tcpa), tcpa)


def cpa(own: VesselKinematics, target: VesselKinematics) -> CpaResult:
    p = local_offset_nm(own.position, target.position)
    ve_s, vn_s = own.velocity()
    ve_t, vn_t = target.velocity()
    return cpa_planar(p, (ve_t - ve_s, vn_t - vn_s))


def safe_distance(loa_s: float, beam_s: float, loa_t: float, beam_t: float, tau: float = 4.0) -> float:
    """Minimum acceptable passing distance in nm, floored at 0.5 nm."""
    if min(loa_s, beam_s, loa_t, beam_t) < 0:
        raise ValueError("vessel dimensions must be >= 0")
    return max(tau * (loa_s + beam_s + loa_t + beam_t) / (2 * METERS_PER_NM), 0.5)


def _clip01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def pair_risk(c: CpaResult, d_safe: float, t_max: float) -> float:
    return _clip01(1.0 - c.dcpa / d_safe) * _clip01(1.0 - abs(c.tcpa) / t_max)


def safety_score(own: Vessel, targets: Sequence[Vessel], config: SafetyConfig = SafetyConfig()) -> float:
    """Mean collision risk over ``targets``; 0 when there are none."""
    if not targets:
        return 0.0
    total = 0.0
    for t in targets:
        d_safe = safe_distance(own.loa, own.beam, t.loa, t.beam, config.tau)
        total += pair_risk(cpa(own.kin, t.kin), d_safe, config.t_max)
    return total / len(targets)
