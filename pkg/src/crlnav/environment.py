"""Episodic navigation environment: traffic playback, currents, observations and stepping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import timedelta
from typing import Protocol, Sequence

import numpy as np

from .fuel import OperationalRecord, TreeEnsemble
from .geo import (GeoPoint, VesselKinematics, compose_over_ground, dead_reckon, destination_point,
                  great_circle_distance, initial_bearing, local_offset_nm, norm_angle)
from .reward import (CurriculumSchedule, RewardBreakdown, RewardWeights, goal_threshold,
                     step_reward)
from .safety import SafetyConfig, Vessel, safety_score
from .scenario import Scenario, current_at
from .synthetic import SyntheticFuelLaw

GRID = 64
V_MAX = 30.0  # knots, SOG normalization

REACHED = "reached"
DEADLINE = "deadline"
OUT_OF_REGION = "out-of-region"


class FuelModel(Protocol):
    def predict_record(self, record: OperationalRecord) -> float: ...


def cell_of(east: float, north: float, window_nm: float, size: int = GRID) -> tuple[int, int] | None:
    """(row, col) of a local offset in a north-up grid centred on the own ship."""
    half = 0.5 * window_nm
    cell = window_nm / size
    col = math.floor((east + half) / cell)
    row = math.floor((half - north) / cell)
    if 0 <= row < size and 0 <= col < size:
        return row, col
    return None


def rasterize(traffic: Sequence[VesselKinematics], own: VesselKinematics, window_nm: float = 10.0,
              size: int = GRID, v_max: float = V_MAX) -> np.ndarray:
    """Egocentric (size, size, 3) occupancy / SOG / COG image.

    Targets are drawn farthest first so the nearest vessel in a shared cell wins.
    """
    if window_nm <= 0:
        raise ValueError("window_nm must be > 0")
    out = np.zeros((size, size, 3))
    placed = []
    for k, t in enumerate(traffic):
        e, n = local_offset_nm(own.position, t.position)
        rc = cell_of(e, n, window_nm, size)
        if rc is not None:
            placed.append((-math.hypot(e, n), k, rc, t))
    placed.sort(key=lambda item: (item[0], item[1]))
    for _, _, (r, c), t in placed:
        out[r, c, 0] = 1.0
        out[r, c, 1] = min(t.sog / v_max, 1.0)
        out[r, c, 2] = norm_angle(t.cog) / 360.0
    return out


@dataclass(frozen=True)
class StepOutcome:
    s1: np.ndarray
    s2: np.ndarray
    reward: RewardBreakdown
    done: bool
    reason: str | None
    d_pre: float
    d_cur: float
    fcr: float
    kin: VesselKinematics
    elapsed_hours: float


class NavigationEnv:
    """One vessel crossing a scenario; traffic is non-reactive playback."""

    def __init__(self, scenario: Scenario, fuel_model: FuelModel | None = None,
                 curriculum: CurriculumSchedule = CurriculumSchedule(),
                 weights: RewardWeights = RewardWeights(), safety: SafetyConfig = SafetyConfig(),
                 seed: int = 0):
        self.scenario = scenario
        if fuel_model is None:
            fuel_model = (TreeEnsemble.load(scenario.fuel_model_path) if scenario.fuel_model_path
                          else SyntheticFuelLaw())
        self.fuel_model = fuel_model
        self.curriculum = curriculum
        self.weights = weights
        self.safety = safety
        self.seed = seed
        self.done = True
        self.episode = -1
        self.omega = curriculum.omega_0

    # state

    def _start_point(self, episode: int) -> GeoPoint:
        sc = self.scenario
        if sc.start_jitter_nm <= 0:
            return sc.start
        rng = np.random.default_rng([self.seed, episode])
        radius = sc.start_jitter_nm * math.sqrt(rng.uniform())
        p = destination_point(sc.start, rng.uniform(0.0, 360.0), radius)
        return p if sc.in_region(p) else sc.start

    def reset(self, episode: int, omega: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Start episode ``episode``; ``omega`` overrides the curriculum goal radius."""
        if episode < 0:
            raise ValueError("episode index must be >= 0")
        sc = self.scenario
        self.episode = episode
        self.omega = goal_threshold(episode, self.curriculum) if omega is None else float(omega)
        self.position = self._start_point(episode)
        self.heading = (initial_bearing(self.position, sc.destination)
                        if self.position != sc.destination else 0.0)
        self.stw = sc.initial_stw
        self.sog, self.cog = self.stw, self.heading
        self.steps = 0
        self.done = False
        self.d_cur = great_circle_distance(self.position, sc.destination)
        return self.observe()

    @property
    def elapsed(self) -> float:
        return self.steps * self.scenario.timestep

    @property
    def clock(self):
        return self.scenario.start_time + timedelta(hours=self.elapsed)

    def kinematics(self) -> VesselKinematics:
        return VesselKinematics(self.position, self.heading, self.stw, self.sog, self.cog)

    def traffic_now(self) -> list[tuple[VesselKinematics, float, float]]:
        out = []
        for tr in self.scenario.traffic:
            k = tr.state_at(self.elapsed)
            if k is not None:
                out.append((k, tr.loa, tr.beam))
        return out

    def visible_targets(self) -> list[Vessel]:
        own = self.kinematics()
        out = []
        for k, loa, beam in self.traffic_now():
            e, n = local_offset_nm(own.position, k.position)
            if cell_of(e, n, self.scenario.window_nm) is not None:
                out.append(Vessel(k, loa, beam))
        return out

    def observe(self) -> tuple[np.ndarray, np.ndarray]:
        sc = self.scenario
        f = sc.current_field
        # only a terminal out-of-region fix can fall off the grid; use the nearest edge value
        probe = GeoPoint(min(max(self.position.lat, f.lats[0]), f.lats[-1]),
                         min(max(self.position.lon, f.lons[0]), f.lons[-1]))
        cur = current_at(f, probe, self.clock)
        h, b = math.radians(self.heading), math.radians(cur.direction)
        s1 = np.array([self.position.lat, self.position.lon, sc.destination.lat, sc.destination.lon,
                       math.sin(h), math.cos(h), math.sin(b), math.cos(b), self.stw])
        s2 = rasterize([k for k, _, _ in self.traffic_now()], self.kinematics(), sc.window_nm)
        return s1, s2

    def is_late(self) -> bool:
        """True once the destination is out of reach even at maximum speed."""
        remaining = self.scenario.horizon_hours - self.elapsed
        return self.d_cur / self.scenario.bounds.v_high > remaining

    # dynamics

    def step(self, delta_heading: float, stw: float) -> StepOutcome:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        if not (math.isfinite(delta_heading) and math.isfinite(stw)):
            raise ValueError("action components must be finite")
        sc = self.scenario
        b = sc.bounds
        dpsi = min(max(delta_heading, -b.max_turn), b.max_turn)
        self.stw = min(max(stw, b.v_low), b.v_high)
        self.heading = norm_angle(self.heading + dpsi)
        clock0 = self.clock
        cur = current_at(sc.current_field, self.position, clock0)
        self.cog, self.sog = compose_over_ground(self.heading, self.stw, cur)
        self.position = dead_reckon(self.position, self.cog, self.sog, sc.timestep)
        self.steps += 1

        d_pre = self.d_cur
        self.d_cur = great_circle_distance(self.position, sc.destination)
        p = sc.particulars
        record = OperationalRecord(self.sog * sc.timestep, self.position.lat, self.position.lon, self.sog,
                                   p.loa, p.beam, p.gt, p.ship_type, clock0.month, clock0.day, clock0.hour)
        fcr = max(float(self.fuel_model.predict_record(record)), 0.0)
        own = Vessel(self.kinematics(), p.loa, p.beam)
        s_t = safety_score(own, self.visible_targets(), self.safety)
        rew = step_reward(d_pre, self.d_cur, self.omega, self.is_late(), fcr, p.gt, s_t, self.weights)

        reason = None
        if self.d_cur < self.omega:
            reason = REACHED
        elif not sc.in_region(self.position):
            reason = OUT_OF_REGION
            penalty = self.weights.out_of_region_penalty
            rew = RewardBreakdown(rew.total - penalty, rew.goal, rew.fuel, rew.safety, rew.case,
                                  rew.alpha, -penalty)
        elif self.steps >= sc.max_steps:
            reason = DEADLINE
        self.done = reason is not None
        s1, s2 = self.observe()
        return StepOutcome(s1, s2, rew, self.done, reason, d_pre, self.d_cur, fcr, self.kinematics(),
                           self.elapsed)
