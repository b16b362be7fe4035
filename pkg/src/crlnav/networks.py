"""Actor and critic networks, the squashed Gaussian policy head, and gradient checking.

Both networks share one topology (separate weights)::

    raster 64x64x3 -> [depthwise 3x3 /2 -> pointwise 1x1 -> tanh] x2 -> flatten
    self state 9   -> dense 64 -> tanh
    concat         -> dense 128 -> tanh -> head

The actor head is a mean in R^2 plus a state-independent log standard deviation;
the critic head is a scalar.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .autograd import Tensor, concat, depthwise_conv2d

ARCH_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Architecture:
    image_size: int = 64
    image_channels: int = 3
    conv_widths: tuple[int, int] = (8, 16)
    state_dim: int = 9
    vector_hidden: int = 64
    trunk_hidden: int = 128
    action_dim: int = 2

    @property
    def flat_image(self) -> int:
        side = self.image_size
        for _ in self.conv_widths:
            side = -(-side // 2)
        return side * side * self.conv_widths[-1]

    def descriptor(self, kind: str) -> dict:
        return {"version": ARCH_VERSION, "kind": kind, "image_size": self.image_size,
                "image_channels": self.image_channels, "conv_widths": list(self.conv_widths),
                "state_dim": self.state_dim, "vector_hidden": self.vector_hidden,
                "trunk_hidden": self.trunk_hidden, "action_dim": self.action_dim}


@dataclass
class NetParams:
    """Named trainable tensors plus fixed input scaling for the self-state vector."""

    kind: str  # "actor" or "critic"
    arch: Architecture
    tensors: dict[str, Tensor]
    obs_shift: np.ndarray = field(default_factory=lambda: np.zeros(9))
    obs_scale: np.ndarray = field(default_factory=lambda: np.ones(9))

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def copy(self) -> "NetParams":
        return NetParams(self.kind, self.arch,
                         {k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.tensors.items()},
                         self.obs_shift.copy(), self.obs_scale.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self.tensors.values()])

    def n_params(self) -> int:
        return sum(t.data.size for t in self.tensors.values())


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    w = q if n_in >= n_out else q.T
    return gain * w[:n_in, :n_out]


def init_params(kind: str, rng: np.random.Generator, arch: Architecture = Architecture()) -> NetParams:
    if kind not in ("actor", "critic"):
        raise ValueError(f"unknown network kind {kind!r}")
    t: dict[str, np.ndarray] = {}
    c_in = arch.image_channels
    for k, width in enumerate(arch.conv_widths, start=1):
        t[f"dw{k}_w"] = rng.standard_normal((3, 3, c_in)) / 3.0  # fan-in 9
        t[f"dw{k}_b"] = np.zeros(c_in)
        t[f"pw{k}_w"] = rng.standard_normal((c_in, width)) / math.sqrt(c_in)
        t[f"pw{k}_b"] = np.zeros(width)
        c_in = width
    t["vec_w"] = _orthogonal(rng, arch.state_dim, arch.vector_hidden, math.sqrt(2))
    t["vec_b"] = np.zeros(arch.vector_hidden)
    t["trunk_w"] = _orthogonal(rng, arch.flat_image + arch.vector_hidden, arch.trunk_hidden, math.sqrt(2))
    t["trunk_b"] = np.zeros(arch.trunk_hidden)
    if kind == "actor":
        t["mu_w"] = _orthogonal(rng, arch.trunk_hidden, arch.action_dim, 0.01)
        t["mu_b"] = np.zeros(arch.action_dim)
        t["log_std"] = np.full(arch.action_dim, math.log(0.5))
    else:
        t["v_w"] = _orthogonal(rng, arch.trunk_hidden, 1, 1.0)
        t["v_b"] = np.zeros(1)
    return NetParams(kind, arch, {k: Tensor(np.ascontiguousarray(v), requires_grad=True) for k, v in t.items()})


def _batch(s1, s2, arch: Architecture) -> tuple[np.ndarray, np.ndarray]:
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    if s1.ndim == 1:
        s1 = s1[None]
    if s2.ndim == 3:
        s2 = s2[None]
    want = (arch.image_size, arch.image_size, arch.image_channels)
    if s1.shape[1:] != (arch.state_dim,) or s2.shape[1:] != want:
        raise ValueError(f"input shapes {s1.shape}, {s2.shape} do not match architecture "
                         f"({arch.state_dim},) and {want}")
    if len(s1) != len(s2):
        raise ValueError("self-state and raster batches differ in size")
    return s1, s2


def features(p: NetParams, s1, s2) -> Tensor:
    """Joint latent representation (B, trunk_hidden)."""
    s1, s2 = _batch(s1, s2, p.arch)
    t = p.tensors
    # empty rasters (open sea) all map to the same conv features: evaluate one of them
    occupied = s2.reshape(len(s2), -1).any(axis=1)
    empty = ~occupied
    if empty.sum() > 1:
        keep = np.concatenate([np.nonzero(occupied)[0], np.nonzero(empty)[0][:1]])
        gather = np.empty(len(s2), dtype=np.intp)
        gather[occupied] = np.arange(occupied.sum())
        gather[empty] = len(keep) - 1
        s2 = s2[keep]
    else:
        gather = None
    h = Tensor(s2)
    for k in range(1, len(p.arch.conv_widths) + 1):
        h = depthwise_conv2d(h, t[f"dw{k}_w"], t[f"dw{k}_b"], stride=2)
        B, H, W, C = h.shape
        h = (h.reshape(B * H * W, C) @ t[f"pw{k}_w"] + t[f"pw{k}_b"]).tanh().reshape(B, H, W, -1)
    img = h.reshape(len(s2), -1)
    if gather is not None:
        img = img[gather]
    vec = (Tensor((s1 - p.obs_shift) / p.obs_scale) @ t["vec_w"] + t["vec_b"]).tanh()
    return (concat([img, vec], axis=1) @ t["trunk_w"] + t["trunk_b"]).tanh()


def actor_graph(p: NetParams, s1, s2) -> tuple[Tensor, Tensor]:
    """(mean (B, 2), log_std (2,)) as graph tensors."""
    if p.kind != "actor":
        raise ValueError("actor_graph needs actor parameters")
    z = features(p, s1, s2)
    return z @ p.tensors["mu_w"] + p.tensors["mu_b"], p.tensors["log_std"]


def critic_graph(p: NetParams, s1, s2) -> Tensor:
    """State values (B,) as a graph tensor."""
    if p.kind != "critic":
        raise ValueError("critic_graph needs critic parameters")
    z = features(p, s1, s2)
    return (z @ p.tensors["v_w"] + p.tensors["v_b"]).reshape(-1)


def forward_actor(p: NetParams, s1, s2) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of the pre-squash Gaussian for one observation."""
    mu, log_std = actor_graph(p, s1, s2)
    return mu.data[0].copy(), np.exp(log_std.data)


def forward_critic(p: NetParams, s1, s2) -> float:
    return float(critic_graph(p, s1, s2).data[0])


# squashed Gaussian policy


@dataclass(frozen=True)
class ActionBounds:
    max_turn: float = 30.0  # degrees per step
    v_low: float = 4.0  # knots
    v_high: float = 20.0

    def scale(self) -> np.ndarray:
        return np.array([self.max_turn, 0.5 * (self.v_high - self.v_low)])

    def squash(self, raw: np.ndarray) -> np.ndarray:
        """Map a pre-squash sample to (delta_heading, stw)."""
        u = np.tanh(np.asarray(raw, dtype=float))
        return np.array([self.max_turn * u[..., 0], self.v_low + 0.5 * (self.v_high - self.v_low) * (u[..., 1] + 1.0)]).T


def log_one_minus_tanh_sq(a: np.ndarray) -> np.ndarray:
    """log(1 - tanh(a)^2), stable for large |a|."""
    a = np.abs(a)
    return 2.0 * (math.log(2.0) - a - np.log1p(np.exp(-2.0 * a)))


def gaussian_log_prob(mu: Tensor, log_std: Tensor, raw) -> Tensor:
    """Sum over action dims of log N(raw; mu, exp(log_std)^2); shape (B,)."""
    raw = np.atleast_2d(raw)
    z = (Tensor(raw) - mu) / log_std.exp()
    return (z * z * -0.5 - log_std - 0.5 * LOG_2PI).sum(axis=1)


def squash_correction(raw, bounds: ActionBounds) -> np.ndarray:
    """Change-of-variables term from the pre-squash sample to bounded action units."""
    raw = np.atleast_2d(raw)
    return -(log_one_minus_tanh_sq(raw) + np.log(bounds.scale())).sum(axis=1)


def action_log_prob(mu, sigma, raw, bounds: ActionBounds) -> float:
    """Log-density of the bounded action produced by ``raw``."""
    mu, sigma, raw = (np.asarray(v, dtype=float) for v in (mu, sigma, raw))
    z = (raw - mu) / sigma
    lp = np.sum(-0.5 * z * z - np.log(sigma) - 0.5 * LOG_2PI)
    return float(lp + squash_correction(raw, bounds)[0])


@dataclass(frozen=True)
class SampledAction:
    delta_heading: float
    stw: float
    raw: np.ndarray
    log_prob: float


def sample_action(mu, sigma, bounds: ActionBounds, rng: np.random.Generator | None) -> SampledAction:
    """Draw from N(mu, diag sigma^2) and squash into the action box.

    ``rng=None`` returns the deterministic action squash(mu).
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    raw = mu.copy() if rng is None else mu + sigma * rng.standard_normal(mu.shape)
    act = bounds.squash(raw)
    return SampledAction(float(act[0]), float(act[1]), raw, action_log_prob(mu, sigma, raw, bounds))


def gaussian_entropy(log_std: Tensor) -> Tensor:
    return (log_std + 0.5 * (LOG_2PI + 1.0)).sum()


# gradients


def compute_gradients(loss: Tensor, params: list[Tensor]) -> list[np.ndarray]:
    """Reverse-mode gradients of a scalar ``loss`` with respect to ``params``."""
    for p in params:
        p.grad = None
    loss.backward()
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]


def finite_diff_check(params: list[Tensor], loss_fn: Callable[[], Tensor], rng: np.random.Generator,
                      n_coords: int = 200, h: float = 1e-6,
                      grads: list[np.ndarray] | None = None, floor: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every tensor contributes a few coordinates; the remainder of ``n_coords`` is
    sampled uniformly over all parameters. The error for one coordinate is
    |a - n| / max(|a|, |n|, floor), so two zeros give 0 and gradients below
    ``floor`` (where rounding noise of order eps*|loss|/h dominates) are
    compared absolutely.
    """
    if grads is None:
        grads = compute_gradients(loss_fn(), params)
    sizes = np.array([p.data.size for p in params])
    starts = np.concatenate([[0], np.cumsum(sizes)])
    picks = set()
    for i, n in enumerate(sizes):
        for j in rng.choice(n, size=min(n, 4), replace=False):
            picks.add(int(starts[i] + j))
    total = int(starts[-1])
    while len(picks) < min(n_coords, total):
        picks.add(int(rng.integers(total)))
    worst = 0.0
    for k in sorted(picks):
        i = int(np.searchsorted(starts, k, side="right") - 1)
        data = params[i].data
        at = np.unravel_index(k - int(starts[i]), data.shape)
        old = data[at]
        data[at] = old + h
        up = loss_fn().item()
        data[at] = old - h
        down = loss_fn().item()
        data[at] = old
        num = (up - down) / (2 * h)
        ana = float(grads[i][at])
        worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), floor))
    return worst


# optimizer


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 max_grad_norm: float | None = 0.5):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> float:
        """Apply one update; returns the pre-clip global gradient norm."""
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g * scale
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}


# checkpoints


def save_checkpoint(path: str | Path, actor: NetParams, critic: NetParams, meta: dict | None = None) -> None:
    """Write both networks to one ``.npz`` with a JSON architecture descriptor."""
    arrays = {}
    for net in (actor, critic):
        for name, t in net.tensors.items():
            arrays[f"{net.kind}/{name}"] = t.data
        arrays[f"{net.kind}/#obs_shift"] = net.obs_shift
        arrays[f"{net.kind}/#obs_scale"] = net.obs_scale
    header = {"format": "crlnav-checkpoint", "actor": actor.arch.descriptor("actor"),
              "critic": critic.arch.descriptor("critic"), "meta": meta or {}}
    with Path(path).open("wb") as fh:
        np.savez(fh, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str | Path, arch: Architecture = Architecture()) -> tuple[NetParams, NetParams, dict]:
    with np.load(path) as z:
        header = json.loads(bytes(z["__header__"]).decode())
        if header.get("format") != "crlnav-checkpoint":
            raise ValueError(f"{path}: not a policy checkpoint")
        nets = []
        for kind in ("actor", "critic"):
            if header[kind] != arch.descriptor(kind):
                raise ValueError(f"{path}: {kind} descriptor {header[kind]} does not match "
                                 f"{arch.descriptor(kind)}")
            template = init_params(kind, np.random.default_rng(0), arch)
            tensors = {}
            for name, t in template.tensors.items():
                data = z[f"{kind}/{name}"]
                if data.shape != t.data.shape:
                    raise ValueError(f"{path}: {kind}/{name} has shape {data.shape}, expected {t.data.shape}")
                tensors[name] = Tensor(data.astype(np.float64), requires_grad=True)
            nets.append(NetParams(kind, arch, tensors, z[f"{kind}/#obs_shift"].copy(),
                                  z[f"{kind}/#obs_scale"].copy()))
    return nets[0], nets[1], header.get("meta", {})
