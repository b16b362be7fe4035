"""Denoising diffusion model for synthetic (lat, lon, sog) vessel trajectories.

Trajectories are normalized per channel into [-1, 1] over a region, noised
with a linear variance schedule and reconstructed by a small fully connected
noise predictor conditioned on a sinusoidal step embedding.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor, concat
from .networks import Adam, compute_gradients
from .tracks import Trajectory


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alphas_bar: np.ndarray
    sigmas: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.betas)

    def with_sigmas(self, sigmas) -> "NoiseSchedule":
        sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), self.betas.shape).copy()
        if np.any(sigmas < 0):
            raise ValueError("sigmas must be >= 0")
        return NoiseSchedule(self.betas, self.alphas_bar, sigmas)


def build_schedule(n_steps: int = 100, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """Linear variance ramp; entry ``t - 1`` of each array belongs to step t."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not 0 < beta_min <= beta_max < 1:
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    betas = np.linspace(beta_min, beta_max, n_steps) if n_steps > 1 else np.array([beta_min])
    alphas_bar = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas, alphas_bar, np.sqrt(betas))


@dataclass(frozen=True)
class RegionNormalizer:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    sog_min: float
    sog_max: float

    def __post_init__(self):
        for lo, hi, name in ((self.lat_min, self.lat_max, "lat"), (self.lon_min, self.lon_max, "lon"),
                             (self.sog_min, self.sog_max, "sog")):
            if not hi > lo:
                raise ValueError(f"{name}: max must exceed min")

    @classmethod
    def from_data(cls, trajs: Sequence[Trajectory], margin: float = 0.05) -> "RegionNormalizer":
        pts = np.concatenate([t.points for t in trajs])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = margin * np.maximum(hi - lo, 1e-3)
        lo, hi = lo - pad, hi + pad
        return cls(lo[0], hi[0], lo[1], hi[1], max(lo[2], 0.0), hi[2])

    @property
    def lo(self) -> np.ndarray:
        return np.array([self.lat_min, self.lon_min, self.sog_min])

    @property
    def hi(self) -> np.ndarray:
        return np.array([self.lat_max, self.lon_max, self.sog_max])

    def normalize(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return 2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return lo + (np.asarray(z, dtype=float) + 1.0) * 0.5 * (hi - lo)


def forward_sample(x0: np.ndarray, t, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps for step(s) t in 1..N.

    ``t`` may be a scalar or one step per leading batch entry.
    """
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > sched.n_steps):
        raise ValueError(f"step must lie in 1..{sched.n_steps}")
    ab = sched.alphas_bar[t - 1]
    x0 = np.asarray(x0, dtype=float)
    shape = ab.shape + (1,) * (x0.ndim - ab.ndim)
    ab = ab.reshape(shape)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * np.asarray(eps, dtype=float)


def reverse_step(x_t: np.ndarray, t: int, eps_hat: np.ndarray, sched: NoiseSchedule,
                 z: np.ndarray | None) -> np.ndarray:
    """One ancestral step t -> t-1; ``z`` is ignored at t = 1."""
    beta = sched.betas[t - 1]
    mean = (x_t - beta / math.sqrt(1.0 - sched.alphas_bar[t - 1]) * eps_hat) / math.sqrt(1.0 - beta)
    if t == 1 or z is None:
        return mean
    return mean + sched.sigmas[t - 1] * z


# denoiser


def step_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding (B, dim) of integer steps."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


@dataclass
class DenoiserParams:
    """Three fully connected layers mapping (flattened x_t, step embedding) to a noise estimate.

    With ``alphas_bar`` set, the network output D is read as a clean-signal
    estimate and converted, eps = (x_t - sqrt(abar_t) D) / sqrt(1 - abar_t).
    At small t the noise is only identifiable through a precise x0, which a
    direct noise head struggles to express; the conversion makes that the
    network's native output. Without ``alphas_bar`` the output is the noise.
    """

    length: int
    hidden: int
    emb_dim: int
    tensors: dict[str, Tensor]
    alphas_bar: np.ndarray | None = None

    @classmethod
    def init(cls, length: int = 64, hidden: int = 256, emb_dim: int = 64,
             rng: np.random.Generator | None = None, alphas_bar: np.ndarray | None = None) -> "DenoiserParams":
        rng = rng if rng is not None else np.random.default_rng(0)
        d_in = 3 * length + emb_dim
        d_out = 3 * length

        def dense(n_in, n_out, gain=1.0):
            return rng.standard_normal((n_in, n_out)) * gain * math.sqrt(2.0 / n_in)

        t = {"w1": dense(d_in, hidden), "b1": np.zeros(hidden),
             "w2": dense(hidden, hidden), "b2": np.zeros(hidden),
             "w3": dense(hidden, d_out, 0.1), "b3": np.zeros(d_out)}
        return cls(length, hidden, emb_dim, {k: Tensor(v, requires_grad=True) for k, v in t.items()}, alphas_bar)

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self.tensors.values()])

    def graph(self, x_t: np.ndarray, t) -> Tensor:
        x_t = np.asarray(x_t, dtype=float)
        if x_t.shape[1:] != (self.length, 3):
            raise ValueError(f"denoiser expects (B, {self.length}, 3), got {x_t.shape}")
        B = len(x_t)
        t = np.broadcast_to(np.asarray(t), (B,))
        emb = step_embedding(t, self.emb_dim)
        w = self.tensors
        h = concat([Tensor(x_t.reshape(B, -1)), Tensor(emb)], axis=1)
        h = (h @ w["w1"] + w["b1"]).relu()
        h = (h @ w["w2"] + w["b2"]).relu()
        out = (h @ w["w3"] + w["b3"]).reshape(B, self.length, 3)
        if self.alphas_bar is None:
            return out
        ab = self.alphas_bar[t - 1][:, None, None]
        return (Tensor(x_t) - out * Tensor(np.sqrt(ab))) * Tensor(1.0 / np.sqrt(1.0 - ab))

    def __call__(self, x_t: np.ndarray, t) -> np.ndarray:
        return self.graph(x_t, t).data


Denoiser = Callable[[np.ndarray, np.ndarray], "np.ndarray | Tensor"]


def diffusion_loss(batch: np.ndarray, denoiser: Denoiser, sched: NoiseSchedule,
                   rng: np.random.Generator):
    """Mean squared noise-prediction error with t uniform in 1..N.

    Returns a graph Tensor when the denoiser does, otherwise a float.
    """
    batch = np.asarray(batch, dtype=float)
    if len(batch) == 0:
        raise ValueError("diffusion_loss needs a non-empty batch")
    t = rng.integers(1, sched.n_steps + 1, size=len(batch))
    eps = rng.standard_normal(batch.shape)
    pred = denoiser(forward_sample(batch, t, eps, sched), t)
    if isinstance(pred, Tensor):
        diff = pred - Tensor(eps)
        return (diff * diff).mean()
    return float(np.mean((np.asarray(pred) - eps) ** 2))


@dataclass(frozen=True)
class DiffusionConfig:
    n_steps: int = 100
    beta_min: float = 1e-4
    beta_max: float = 0.02
    length: int = 64
    hidden: int = 256
    emb_dim: int = 64
    epochs: int = 50
    batch_size: int = 64
    step_size: float = 1e-3
    max_grad_norm: float | None = 1.0
    timestep: float = 0.5  # hours between samples
    predict_x0: bool = True  # read the network output as a clean-signal estimate
    seed: int = 0

    def schedule(self) -> NoiseSchedule:
        return build_schedule(self.n_steps, self.beta_min, self.beta_max)


@dataclass
class TrafficGenerator:
    params: DenoiserParams
    normalizer: RegionNormalizer
    config: DiffusionConfig
    losses: list[float] = field(default_factory=list)

    @property
    def schedule(self) -> NoiseSchedule:
        return self.config.schedule()

    def sample(self, n: int, rng: np.random.Generator) -> list[Trajectory]:
        return sample_trajectories(self.params, self.schedule, self.normalizer, n, rng, self.config.timestep)

    def save(self, path: str | Path) -> None:
        header = {"format": "crlnav-diffusion", "config": asdict(self.config), "normalizer": asdict(self.normalizer)}
        arrays = {k: t.data for k, t in self.params.tensors.items()}
        with Path(path).open("wb") as fh:
            np.savez(fh, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "TrafficGenerator":
        with np.load(path) as z:
            header = json.loads(bytes(z["__header__"]).decode())
            if header.get("format") != "crlnav-diffusion":
                raise ValueError(f"{path}: not a diffusion checkpoint")
            cfg = DiffusionConfig(**header["config"])
            params = DenoiserParams.init(cfg.length, cfg.hidden, cfg.emb_dim,
                                         alphas_bar=cfg.schedule().alphas_bar if cfg.predict_x0 else None)
            for k, t in params.tensors.items():
                if z[k].shape != t.data.shape:
                    raise ValueError(f"{path}: {k} has shape {z[k].shape}, expected {t.data.shape}")
                t.data = z[k].astype(np.float64)
        return cls(params, RegionNormalizer(**header["normalizer"]), cfg)


def _stack(dataset: Sequence[Trajectory], length: int) -> np.ndarray:
    if len(dataset) == 0:
        raise ValueError("training needs at least one trajectory")
    bad = [t.traj_id for t in dataset if len(t) != length]
    if bad:
        raise ValueError(f"trajectories {bad[:5]} do not have length {length}")
    return np.stack([t.points for t in dataset])


def train_denoiser(dataset: Sequence[Trajectory], config: DiffusionConfig = DiffusionConfig(),
                   normalizer: RegionNormalizer | None = None, max_steps: int | None = None) -> TrafficGenerator:
    """Fit the noise predictor with Adam over shuffled minibatches.

    ``max_steps`` caps the number of gradient steps regardless of epochs.
    """
    data = _stack(dataset, config.length)
    normalizer = normalizer or RegionNormalizer.from_data(dataset)
    x = normalizer.normalize(data)
    rng = np.random.default_rng([config.seed, 7])
    sched = config.schedule()
    params = DenoiserParams.init(config.length, config.hidden, config.emb_dim, rng,
                                 sched.alphas_bar if config.predict_x0 else None)
    opt = Adam(params.parameters(), lr=config.step_size, max_grad_norm=config.max_grad_norm)
    losses: list[float] = []
    steps = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(x))
        for lo in range(0, len(x), config.batch_size):
            if max_steps is not None and steps >= max_steps:
                break
            loss = diffusion_loss(x[order[lo:lo + config.batch_size]], params.graph, sched, rng)
            losses.append(loss.item())
            opt.step(compute_gradients(loss, params.parameters()))
            steps += 1
    return TrafficGenerator(params, normalizer, config, losses)


def reverse_process(denoiser: Denoiser, sched: NoiseSchedule, shape: tuple[int, ...],
                    rng: np.random.Generator, x_init: np.ndarray | None = None) -> np.ndarray:
    """Run the ancestral sampler from step N down to 0 in normalized space."""
    x = rng.standard_normal(shape) if x_init is None else np.array(x_init, dtype=float)
    for t in range(sched.n_steps, 0, -1):
        eps_hat = np.asarray(denoiser(x, np.full(shape[0], t)))
        z = rng.standard_normal(shape) if t > 1 else None
        x = reverse_step(x, t, eps_hat, sched, z)
    return x


def sample_trajectories(params: Denoiser, sched: NoiseSchedule, normalizer: RegionNormalizer, n: int,
                        rng: np.random.Generator, timestep: float = 0.5,
                        length: int | None = None) -> list[Trajectory]:
    """Draw ``n`` trajectories, clamped into the normalizer's region with sog >= 0."""
    if n <= 0:
        return []
    length = length or params.length
    z = reverse_process(params, sched, (n, length, 3), rng)
    pts = normalizer.denormalize(np.clip(z, -1.0, 1.0))
    pts[..., 2] = np.maximum(pts[..., 2], 0.0)
    return [Trajectory(p, timestep, f"gen{i}") for i, p in enumerate(pts)]


def sample_trajectory(params: Denoiser, sched: NoiseSchedule, normalizer: RegionNormalizer,
                      rng: np.random.Generator, timestep: float = 0.5, length: int | None = None) -> Trajectory:
    return sample_trajectories(params, sched, normalizer, 1, rng, timestep, length)[0]
