"""Policy evaluation (AR / AFC / ASS), per-step traces and GeoJSON / CSV export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from .environment import REACHED, NavigationEnv
from .networks import NetParams, forward_actor, sample_action
from .ppo import observation_scaling
from .reward import CurriculumSchedule, RewardBreakdown, RewardWeights
from .safety import SafetyConfig
from .scenario import Scenario


@dataclass(frozen=True)
class EpisodeMetrics:
    ar: float  # accumulated reward
    afc: float  # accumulated fuel, metric tons
    ass: float  # accumulated safety score (higher = riskier)
    reached: bool
    steps: int
    final_distance: float = float("nan")


@dataclass(frozen=True)
class TraceRecord:
    time: datetime
    lat: float
    lon: float
    heading: float
    stw: float
    sog: float
    cog: float
    reward: RewardBreakdown | None
    fcr: float

    def properties(self) -> dict:
        d = {"time": self.time.isoformat(), "heading": self.heading, "stw": self.stw, "sog": self.sog,
             "cog": self.cog, "fcr": self.fcr}
        if self.reward is not None:
            r = self.reward
            d.update(reward=r.total, goal=r.goal, fuel=r.fuel, safety=r.safety, case=r.case)
        return d


def _initial_record(env: NavigationEnv) -> TraceRecord:
    return TraceRecord(env.clock, env.position.lat, env.position.lon, env.heading, env.stw, env.sog,
                       env.cog, None, 0.0)


def run_episode(env: NavigationEnv, actor: NetParams, episode: int, omega: float,
                rng: np.random.Generator | None) -> tuple[EpisodeMetrics, list[TraceRecord]]:
    """Roll one episode; ``rng=None`` acts with squash(mu)."""
    s1, s2 = env.reset(episode, omega=omega)
    trace = [_initial_record(env)]
    ar = afc = ass = 0.0
    reason = None
    steps = 0
    while not env.done:
        mu, sigma = forward_actor(actor, s1, s2)
        act = sample_action(mu, sigma, env.scenario.bounds, rng)
        out = env.step(act.delta_heading, act.stw)
        ar += out.reward.total
        afc += out.fcr * env.scenario.timestep
        ass += out.reward.safety
        steps += 1
        reason = out.reason
        k = out.kin
        trace.append(TraceRecord(env.clock, k.position.lat, k.position.lon, k.heading, k.stw, k.sog, k.cog,
                                 out.reward, out.fcr))
        s1, s2 = out.s1, out.s2
    return EpisodeMetrics(ar, afc, ass, reason == REACHED, steps, env.d_cur), trace


def check_compatible(actor: NetParams, scenario: Scenario) -> None:
    """Reject a policy whose baked-in input scaling was fitted to another scenario.

    The scaling encodes the destination and the speed range, so a mismatch
    means the network would see coordinates it was never trained on.
    """
    shift, scale = observation_scaling(scenario)
    if not (np.allclose(actor.obs_shift, shift, rtol=0, atol=1e-9)
            and np.allclose(actor.obs_scale, scale, rtol=1e-9, atol=0)):
        raise ValueError("checkpoint does not match the scenario (destination or speed bounds differ)")


def evaluate_policy(actor: NetParams, scenario: Scenario, episodes: int, deterministic: bool = True,
                    omega_f: float = 0.5, seed: int = 0, fuel_model=None,
                    weights: RewardWeights = RewardWeights(), safety: SafetyConfig = SafetyConfig(),
                    ) -> tuple[list[EpisodeMetrics], list[list[TraceRecord]]]:
    """Run ``episodes`` episodes at the final goal radius ``omega_f``."""
    if episodes < 0:
        raise ValueError("episodes must be >= 0")
    if actor.kind != "actor":
        raise ValueError("evaluate_policy needs actor parameters")
    check_compatible(actor, scenario)
    env = NavigationEnv(scenario, fuel_model, CurriculumSchedule(omega_f, omega_f, 1, False), weights, safety,
                        seed=seed)
    rng = None if deterministic else np.random.default_rng([seed, 3])
    metrics, traces = [], []
    for e in range(episodes):
        m, tr = run_episode(env, actor, e, omega_f, rng)
        metrics.append(m)
        traces.append(tr)
    return metrics, traces


def summarize(metrics: Sequence[EpisodeMetrics]) -> dict:
    """Mean and sample standard deviation of each metric plus the reach rate."""
    if not metrics:
        return {"episodes": 0}
    out: dict = {"episodes": len(metrics)}
    for name in ("ar", "afc", "ass", "steps"):
        v = np.array([getattr(m, name) for m in metrics], dtype=float)
        out[f"{name}_mean"] = float(v.mean())
        out[f"{name}_std"] = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    out["reach_rate"] = float(np.mean([m.reached for m in metrics]))
    return out


def write_metrics(path: str | Path, metrics: Sequence[EpisodeMetrics]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "ar", "afc", "ass", "reached", "steps", "final_distance"])
        for i, m in enumerate(metrics):
            w.writerow([i, repr(m.ar), repr(m.afc), repr(m.ass), int(m.reached), m.steps, repr(m.final_distance)])


def trace_geojson(trace: Sequence[TraceRecord]) -> dict:
    if not trace:
        raise ValueError("cannot export an empty trace")
    coords = [[r.lon, r.lat] for r in trace]
    line = {"type": "Feature", "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {"role": "track", "steps": [r.properties() for r in trace]}}
    start = {"type": "Feature", "geometry": {"type": "Point", "coordinates": coords[0]},
             "properties": {"role": "start", **trace[0].properties()}}
    end = {"type": "Feature", "geometry": {"type": "Point", "coordinates": coords[-1]},
           "properties": {"role": "end", **trace[-1].properties()}}
    return {"type": "FeatureCollection", "features": [line, start, end]}


def export_geojson(trace: Sequence[TraceRecord], path: str | Path) -> None:
    doc = trace_geojson(trace)
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=False))

