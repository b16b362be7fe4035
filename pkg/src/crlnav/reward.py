"""Multi-objective step reward and the curriculum goal-radius schedule."""

from __future__ import annotations

from dataclasses import dataclass

TERMINAL = "terminal"
MOVED_AWAY = "moved_away"
LATE = "late"
DEFAULT = "default"


@dataclass(frozen=True)
class RewardWeights:
    goal_weight: float = 1.5
    terminal_bonus: float = 30.0
    moved_away_penalty: float = 1.0
    late_coeff: float = 0.1
    alpha: float = 500.0
    out_of_region_penalty: float = 30.0


@dataclass(frozen=True)
class CurriculumSchedule:
    omega_0: float = 5.0
    omega_f: float = 0.5
    total_episodes: int = 1000
    enabled: bool = True

    def __post_init__(self):
        if self.omega_0 <= 0 or self.omega_f <= 0:
            raise ValueError("curriculum radii must be > 0")
        if self.total_episodes < 1:
            raise ValueError("total_episodes must be >= 1")


@dataclass(frozen=True)
class RewardBreakdown:
    total: float
    goal: float
    fuel: float
    safety: float
    case: str
    alpha: float
    extra: float = 0.0  # terminal penalties outside the case table (leaving the region)


def goal_threshold(e: int, sched: CurriculumSchedule) -> float:
    """Goal radius in nm for episode ``e``."""
    if e < 0:
        raise ValueError("episode index must be >= 0")
    if not sched.enabled:
        return sched.omega_f
    frac = e / sched.total_episodes
    return sched.omega_0 * max(1.0 - frac, 0.0) + sched.omega_f * min(frac, 1.0)


def goal_reward(d_pre: float, d_cur: float) -> float:
    return d_pre - d_cur


def fuel_penalty(fcr: float, gt: float, alpha: float = 500.0) -> float:
    if gt <= 0:
        raise ValueError(f"gross tonnage must be > 0, got {gt}")
    return alpha * fcr / gt


def step_reward(
    d_pre: float,
    d_cur: float,
    omega_e: float,
    is_late: bool,
    fcr: float,
    gt: float,
    s_t: float,
    weights: RewardWeights = RewardWeights(),
) -> RewardBreakdown:
    """Select the reward case (first match wins) and total it."""
    w = weights
    g = goal_reward(d_pre, d_cur)
    f = fuel_penalty(fcr, gt, w.alpha)
    # each case spelled out left to right so totals are reproducible bit-for-bit
    if d_cur < omega_e:
        case, total = TERMINAL, w.terminal_bonus + w.goal_weight * g - f - s_t
    elif d_cur > d_pre:
        case, total = MOVED_AWAY, w.goal_weight * g - f - s_t - w.moved_away_penalty
    elif is_late:
        case, total = LATE, w.goal_weight * g - f - s_t - w.late_coeff * d_cur
    else:
        case, total = DEFAULT, w.goal_weight * g - f - s_t
    return RewardBreakdown(total=total, goal=g, fuel=f, safety=s_t, case=case, alpha=weights.alpha)
