"""Curriculum PPO: rollout collection, GAE, clipped-surrogate updates and the training loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .autograd import Tensor, minimum
from .environment import REACHED, NavigationEnv
from .geo import NM_PER_DEGREE
from .networks import (ActionBounds, Adam, NetParams, actor_graph, compute_gradients, critic_graph,
                       forward_actor, forward_critic, gaussian_entropy, gaussian_log_prob, init_params,
                       sample_action, save_checkpoint, squash_correction)
from .reward import CurriculumSchedule, RewardBreakdown, RewardWeights
from .safety import SafetyConfig
from .scenario import Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    epochs_per_update: int = 4
    minibatch_size: int = 64
    horizon: int = 2048
    step_size: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    init_std: float = 0.5  # initial pre-squash policy standard deviation
    reward_scale: float = 0.02  # rewards seen by the critic; reported rewards are unscaled
    total_episodes: int = 1000
    curriculum: bool = True
    n_envs: int = 1
    ma_window: int = 20

    def __post_init__(self):
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be > 0")
        if self.reward_scale <= 0 or self.init_std <= 0:
            raise ValueError("reward_scale and init_std must be > 0")
        if self.horizon < 0 or self.minibatch_size < 1 or self.n_envs < 1:
            raise ValueError("horizon >= 0, minibatch_size >= 1 and n_envs >= 1 required")
        if self.total_episodes < 0 or self.epochs_per_update < 1:
            raise ValueError("total_episodes >= 0 and epochs_per_update >= 1 required")


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs besides the scenario."""

    ppo: PPOConfig = PPOConfig()
    omega_0: float = 5.0
    omega_f: float = 0.5
    curriculum_episodes: int | None = None  # defaults to ppo.total_episodes
    reward: RewardWeights = RewardWeights()
    safety: SafetyConfig = SafetyConfig()
    seed: int = 0

    def schedule(self) -> CurriculumSchedule:
        n = self.curriculum_episodes or self.ppo.total_episodes
        return CurriculumSchedule(self.omega_0, self.omega_f, n, self.ppo.curriculum)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        kw = dict(doc)
        for key, typ in (("ppo", PPOConfig), ("reward", RewardWeights), ("safety", SafetyConfig)):
            if key in kw:
                sub = kw[key]
                bad = set(sub) - {f.name for f in fields(typ)}
                if bad:
                    raise ValueError(f"unknown {key} keys {sorted(bad)}")
                kw[key] = typ(**sub)
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# rollouts


@dataclass
class Transition:
    s1: np.ndarray
    s2: tuple  # sparse raster: (rows, cols, values (k, 3))
    raw_action: np.ndarray
    action: tuple[float, float]
    log_prob: float
    reward: RewardBreakdown
    value: float
    done: bool
    env_id: int = 0
    episode: int = 0


def sparse_raster(img: np.ndarray) -> tuple:
    r, c = np.nonzero(img[:, :, 0])
    return r, c, img[r, c, :].copy()


def dense_raster(sp: tuple, size: int = 64) -> np.ndarray:
    img = np.zeros((size, size, 3))
    r, c, v = sp
    img[r, c, :] = v
    return img


@dataclass
class EpisodeLog:
    index: int
    reward: float
    steps: int
    reached: bool
    omega: float
    fuel: float
    safety: float


class RolloutWorker:
    """Owns the environments and carries unfinished episodes across rollouts."""

    def __init__(self, envs: Sequence[NavigationEnv]):
        self.envs = list(envs)
        self.next_episode = 0
        self.obs = []
        self.acc = []
        for env in self.envs:
            self.obs.append(env.reset(self._take_episode()))
            self.acc.append([0.0, 0, 0.0, 0.0])
        self.finished: list[EpisodeLog] = []

    def _take_episode(self) -> int:
        e = self.next_episode
        self.next_episode += 1
        return e


@dataclass
class Rollout:
    transitions: list[Transition]
    last_values: dict[int, float]  # bootstrap value per env for its trailing partial episode


def collect_rollout(worker: RolloutWorker, actor: NetParams, critic: NetParams, horizon: int,
                    rng: np.random.Generator) -> Rollout:
    """Step the worker's environments round-robin for exactly ``horizon`` transitions."""
    out: list[Transition] = []
    for t in range(horizon):
        k = t % len(worker.envs)
        env = worker.envs[k]
        s1, s2 = worker.obs[k]
        mu, sigma = forward_actor(actor, s1, s2)
        value = forward_critic(critic, s1, s2)
        act = sample_action(mu, sigma, env.scenario.bounds, rng)
        res = env.step(act.delta_heading, act.stw)
        out.append(Transition(s1, sparse_raster(s2), act.raw, (act.delta_heading, act.stw), act.log_prob,
                              res.reward, value, res.done, k, env.episode))
        acc = worker.acc[k]
        acc[0] += res.reward.total
        acc[1] += 1
        acc[2] += res.fcr * env.scenario.timestep
        acc[3] += res.reward.safety
        if res.done:
            worker.finished.append(EpisodeLog(env.episode, acc[0], acc[1], res.reason == REACHED,
                                              env.omega, acc[2], acc[3]))
            worker.acc[k] = [0.0, 0, 0.0, 0.0]
            worker.obs[k] = env.reset(worker._take_episode())
        else:
            worker.obs[k] = (res.s1, res.s2)
    last = {k: forward_critic(critic, *worker.obs[k]) for k in range(len(worker.envs))}
    return Rollout(out, last)


def compute_gae(rewards, values, dones, last_value: float, gamma: float, lam: float):
    """Generalized advantage estimates and return targets for one environment stream.

    ``dones[t]`` marks that the episode ended with transition ``t``;
    ``last_value`` bootstraps the state following the final transition.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    n = len(rewards)
    adv = np.zeros(n)
    next_value, next_adv = last_value, 0.0
    for t in range(n - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


def rollout_advantages(ro: Rollout, gamma: float, lam: float,
                       reward_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    n = len(ro.transitions)
    adv = np.zeros(n)
    ret = np.zeros(n)
    env_ids = np.array([tr.env_id for tr in ro.transitions])
    for k, last in ro.last_values.items():
        idx = np.nonzero(env_ids == k)[0]
        if len(idx) == 0:
            continue
        trs = [ro.transitions[i] for i in idx]
        a, r = compute_gae([reward_scale * tr.reward.total for tr in trs], [tr.value for tr in trs],
                           [tr.done for tr in trs], last, gamma, lam)
        adv[idx], ret[idx] = a, r
    return adv, ret


def normalize(adv: np.ndarray) -> np.ndarray:
    if len(adv) < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + 1e-12)


# updates


@dataclass
class Batch:
    s1: np.ndarray
    s2: np.ndarray
    raw: np.ndarray
    old_log_prob: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    @classmethod
    def from_transitions(cls, trs: Sequence[Transition], adv, ret, bounds: ActionBounds) -> "Batch":
        raw = np.stack([tr.raw_action for tr in trs])
        # stored log-probs include the squash term; the surrogate works with the Gaussian part
        lp = np.array([tr.log_prob for tr in trs]) - squash_correction(raw, bounds)
        return cls(np.stack([tr.s1 for tr in trs]), np.stack([dense_raster(tr.s2) for tr in trs]),
                   raw, lp, np.asarray(adv, dtype=float), np.asarray(ret, dtype=float))


@dataclass
class LossTerms:
    total: Tensor
    policy: float
    value: float
    entropy: float
    ratios: np.ndarray
    clip_fraction: float


def ppo_loss(actor: NetParams, critic: NetParams, b: Batch, cfg: PPOConfig) -> LossTerms:
    mu, log_std = actor_graph(actor, b.s1, b.s2)
    logp = gaussian_log_prob(mu, log_std, b.raw)
    ratio = (logp - Tensor(b.old_log_prob)).exp()
    adv = Tensor(b.advantages)
    eps = cfg.clip_epsilon
    surrogate = minimum(ratio * adv, ratio.clip(1.0 - eps, 1.0 + eps) * adv)
    policy_loss = -surrogate.mean()
    v = critic_graph(critic, b.s1, b.s2)
    diff = v - Tensor(b.returns)
    value_loss = (diff * diff).mean()
    entropy = gaussian_entropy(log_std)
    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    r = ratio.data
    return LossTerms(total, policy_loss.item(), value_loss.item(), entropy.item(), r,
                     float(np.mean(np.abs(r - 1.0) > eps)))


def policy_log_prob(actor: NetParams, b: Batch) -> np.ndarray:
    mu, log_std = actor_graph(actor, b.s1, b.s2)
    return gaussian_log_prob(mu, log_std, b.raw).data


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float
    mean_abs_ratio_dev: float
    grad_norm: float


def make_optimizers(actor: NetParams, critic: NetParams, cfg: PPOConfig) -> tuple[Adam, Adam]:
    """One optimizer per network so each gets its own gradient-norm clip."""
    return (Adam(actor.parameters(), lr=cfg.step_size, max_grad_norm=cfg.max_grad_norm),
            Adam(critic.parameters(), lr=cfg.step_size, max_grad_norm=cfg.max_grad_norm))


def ppo_update(actor: NetParams, critic: NetParams, opts: tuple[Adam, Adam], batch: Batch, cfg: PPOConfig,
               rng: np.random.Generator) -> UpdateStats:
    """Clipped-surrogate epochs over shuffled minibatches; updates parameters in place.

    The combined loss is differentiated once; actor and critic gradients are
    then clipped and applied by their own optimizers.
    """
    n = len(batch.raw)
    if n == 0:
        raise ValueError("ppo_update needs a non-empty batch")
    adv = normalize(batch.advantages)
    # Re-evaluate the behaviour log-probs with the batched forward pass. The
    # stored per-step values agree only to rounding (single-row products take a
    # different BLAS path), and the ratio must be exactly one before any step.
    old_lp = policy_log_prob(actor, batch)
    a_params, c_params = actor.parameters(), critic.parameters()
    params = a_params + c_params
    stats = []
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.minibatch_size):
            idx = order[lo:lo + cfg.minibatch_size]
            mb = Batch(batch.s1[idx], batch.s2[idx], batch.raw[idx], old_lp[idx], adv[idx],
                       batch.returns[idx])
            terms = ppo_loss(actor, critic, mb, cfg)
            if not math.isfinite(terms.total.item()):
                raise FloatingPointError(
                    f"non-finite PPO loss (policy {terms.policy}, value {terms.value}, "
                    f"entropy {terms.entropy}); aborting update")
            grads = compute_gradients(terms.total, params)
            gnorm = opts[0].step(grads[:len(a_params)])
            opts[1].step(grads[len(a_params):])
            stats.append((terms.policy, terms.value, terms.entropy, terms.clip_fraction, gnorm))
    new_lp = policy_log_prob(actor, batch)
    log_ratio = new_lp - old_lp
    s = np.array(stats)
    return UpdateStats(float(s[:, 0].mean()), float(s[:, 1].mean()), float(s[:, 2].mean()),
                       float(np.mean(np.expm1(log_ratio) - log_ratio)), float(s[:, 3].mean()),
                       float(np.mean(np.abs(np.exp(log_ratio) - 1.0))), float(s[:, 4].mean()))


# training loop


@dataclass
class TrainReport:
    episode_rewards: list[float] = field(default_factory=list)
    moving_average: list[float] = field(default_factory=list)
    thresholds: list[float] = field(default_factory=list)
    reached: list[bool] = field(default_factory=list)
    episode_fuel: list[float] = field(default_factory=list)
    episode_safety: list[float] = field(default_factory=list)
    updates: list[UpdateStats] = field(default_factory=list)
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def write_curve(self, path: str | Path) -> None:
        """Delimited reward curve: episode, reward, moving average, goal radius, reached."""
        with Path(path).open("w") as fh:
            fh.write("episode,reward,moving_average,threshold,reached\n")
            for e, (r, m, w, ok) in enumerate(zip(self.episode_rewards, self.moving_average,
                                                  self.thresholds, self.reached)):
                fh.write(f"{e},{r!r},{m!r},{w!r},{int(ok)}\n")


def moving_average(x: Sequence[float], window: int) -> list[float]:
    out, acc = [], 0.0
    for i, v in enumerate(x):
        acc += v
        if i >= window:
            acc -= x[i - window]
        out.append(acc / min(i + 1, window))
    return out


def observation_scaling(scenario: Scenario, scale_nm: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    """Affine input map: own position relative to the destination in units of ``scale_nm``.

    The destination entries are centred the same way, so for a fixed-goal
    scenario they map to zero. Speed is mapped into [-1, 1] over the action range.
    """
    dest = scenario.destination
    s_lat = scale_nm / NM_PER_DEGREE
    s_lon = s_lat / max(math.cos(math.radians(dest.lat)), 1e-6)
    b = scenario.bounds
    shift = np.array([dest.lat, dest.lon, dest.lat, dest.lon, 0, 0, 0, 0, 0.5 * (b.v_low + b.v_high)])
    scale = np.array([s_lat, s_lon, s_lat, s_lon, 1, 1, 1, 1, 0.5 * (b.v_high - b.v_low)])
    return shift, scale


def make_envs(scenario: Scenario, cfg: TrainConfig, fuel_model=None) -> list[NavigationEnv]:
    return [NavigationEnv(scenario, fuel_model, cfg.schedule(), cfg.reward, cfg.safety, seed=cfg.seed * 1000 + k)
            for k in range(cfg.ppo.n_envs)]


def init_agent(scenario: Scenario, seed: int, init_std: float = 0.5) -> tuple[NetParams, NetParams]:
    rng = np.random.default_rng([seed, 1])
    actor = init_params("actor", rng)
    actor.tensors["log_std"].data[:] = math.log(init_std)
    critic = init_params("critic", rng)
    shift, scale = observation_scaling(scenario)
    for net in (actor, critic):
        net.obs_shift, net.obs_scale = shift.copy(), scale.copy()
    return actor, critic


def train_crl(scenario: Scenario, cfg: TrainConfig, checkpoint: str | Path | None = None,
              fuel_model=None) -> tuple[TrainReport, NetParams, NetParams]:
    """Alternate rollouts and PPO updates until ``total_episodes`` episodes have finished."""
    ppo = cfg.ppo
    if ppo.horizon == 0 and ppo.total_episodes > 0:
        raise ValueError("a zero rollout horizon can never finish an episode")
    actor, critic = init_agent(scenario, cfg.seed, ppo.init_std)
    opts = make_optimizers(actor, critic, ppo)
    rng = np.random.default_rng([cfg.seed, 2])
    worker = RolloutWorker(make_envs(scenario, cfg, fuel_model))
    report = TrainReport()
    bounds = scenario.bounds
    while len(worker.finished) < ppo.total_episodes:
        ro = collect_rollout(worker, actor, critic, ppo.horizon, rng)
        adv, ret = rollout_advantages(ro, ppo.gamma, ppo.gae_lambda, ppo.reward_scale)
        batch = Batch.from_transitions(ro.transitions, adv, ret, bounds)
        stats = ppo_update(actor, critic, opts, batch, ppo, rng)
        report.updates.append(stats)
        done = worker.finished[:ppo.total_episodes]
        recent = done[-50:]
        acts = np.array([tr.action for tr in ro.transitions]) if ro.transitions else np.zeros((1, 2))
        log.info("episodes %d/%d  mean reward %.2f  reach %.2f  omega %.2f  vloss %.3f  kl %.4f  "
                 "turn %.1f  stw %.1f  std %s",
                 len(done), ppo.total_episodes, np.mean([e.reward for e in recent]) if recent else float("nan"),
                 np.mean([e.reached for e in recent]) if recent else float("nan"),
                 recent[-1].omega if recent else float("nan"), stats.value_loss, stats.approx_kl,
                 acts[:, 0].mean(), acts[:, 1].mean(), np.round(np.exp(actor.tensors["log_std"].data), 3))
    eps = sorted(worker.finished, key=lambda e: e.index)[:ppo.total_episodes]
    report.episode_rewards = [e.reward for e in eps]
    report.moving_average = moving_average(report.episode_rewards, ppo.ma_window)
    report.thresholds = [e.omega for e in eps]
    report.reached = [e.reached for e in eps]
    report.episode_fuel = [e.fuel for e in eps]
    report.episode_safety = [e.safety for e in eps]
    if checkpoint is not None:
        save_checkpoint(checkpoint, actor, critic, {"config": cfg.to_dict(), "episodes": len(eps)})
        report.checkpoint = str(checkpoint)
    return report, actor, critic


def with_overrides(cfg: TrainConfig, **ppo_kw) -> TrainConfig:
    return replace(cfg, ppo=replace(cfg.ppo, **ppo_kw))
