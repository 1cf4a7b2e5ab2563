"""Gaussian policies: vanilla, time-in-observation, and time-indexed multi-head.

All three variants share one implementation.  A vanilla policy is a
multi-head policy with a single head; the time-in-observation policy also has
one head but appends ``t / T`` to its input.  The multi-head policy keeps
``k`` linear mean heads (each with its own log-std) on top of a shared trunk
and, at episode step ``t``, acts with head ``floor(t * k / T)``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import ndmath as nd
from .errors import ArgumentError
from .ndmath import Tensor

VANILLA = "vanilla"
TIME_OBS = "time-obs"
MULTI_HEAD = "multi-head"
VARIANTS = (VANILLA, TIME_OBS, MULTI_HEAD)

_ALIASES = {
    "vanilla": VANILLA,
    "time-obs": TIME_OBS,
    "timeobs": TIME_OBS,
    "time_obs": TIME_OBS,
    "multi-head": MULTI_HEAD,
    "multihead": MULTI_HEAD,
    "multi_head": MULTI_HEAD,
}

INITIAL_LOGSTD = -0.5
HEAD_INIT_SCALE = 0.01


def canonical_variant(name: str) -> str:
    try:
        return _ALIASES[name.lower()]
    except KeyError:
        raise ArgumentError(f"unknown policy variant {name!r}; expected one of {VARIANTS}") from None


def select_head(t: int, horizon: int, heads: int) -> int:
    """Index of the head that acts at episode step ``t`` (0-based).

    ``floor(t * heads / horizon)`` in integer arithmetic, clamped to
    ``heads - 1`` so that steps at or past the horizon stay on the last head.

    >>> [select_head(t, 7, 3) for t in range(7)]
    [0, 0, 0, 1, 1, 2, 2]
    """
    t, horizon, heads = int(t), int(horizon), int(heads)
    if t < 0:
        raise ArgumentError(f"step t={t} must be non-negative")
    if heads < 1 or heads > horizon:
        raise ArgumentError(f"head count k={heads} must satisfy 1 <= k <= T={horizon}")
    return min(t * heads // horizon, heads - 1)


def head_schedule(t, horizon: int, heads: int) -> np.ndarray:
    """Vectorised :func:`select_head` over an array of steps."""
    t = np.asarray(t, dtype=np.int64)
    if heads < 1 or heads > horizon:
        raise ArgumentError(f"head count k={heads} must satisfy 1 <= k <= T={horizon}")
    if t.size and t.min() < 0:
        raise ArgumentError("steps must be non-negative")
    return np.minimum(t * heads // horizon, heads - 1)


@dataclass(frozen=True)
class PolicyConfig:
    variant: str = MULTI_HEAD
    obs_dim: int = 1
    action_dim: int = 1
    heads: int = 1
    horizon: int = 100
    trunk_widths: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "variant", canonical_variant(self.variant))
        set_(self, "trunk_widths", tuple(int(w) for w in self.trunk_widths))
        if self.variant != MULTI_HEAD:
            set_(self, "heads", 1)
        if self.obs_dim < 1 or self.action_dim < 1 or self.horizon < 1:
            raise ArgumentError(
                f"obs_dim, action_dim and horizon must be positive, got "
                f"{self.obs_dim}, {self.action_dim}, {self.horizon}"
            )
        if not 1 <= self.heads <= self.horizon:
            raise ArgumentError(f"head count k={self.heads} must satisfy 1 <= k <= T={self.horizon}")
        if any(w < 1 for w in self.trunk_widths):
            raise ArgumentError(f"trunk widths must be positive, got {self.trunk_widths}")
        if not 0 <= self.seed < 2**64:
            raise ArgumentError("seed must be a 64-bit unsigned integer")

    @property
    def input_dim(self) -> int:
        return self.obs_dim + (1 if self.variant == TIME_OBS else 0)


@dataclass
class Head:
    weight: Tensor
    bias: Tensor
    logstd: Tensor

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias, self.logstd]


@dataclass
class ActionDistribution:
    mean: np.ndarray
    logstd: np.ndarray
    head: int
    t: int = 0


@dataclass
class Policy:
    config: PolicyConfig
    trunk: list = field(default_factory=list)
    heads: list = field(default_factory=list)

    def parameters(self) -> list[Tensor]:
        params = [p for layer in self.trunk for p in layer]
        for head in self.heads:
            params.extend(head.parameters())
        return params

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}

    def copy(self) -> "Policy":
        return copy.deepcopy(self)

    def _inputs(self, obs, t):
        cfg = self.config
        obs = np.asarray(obs, dtype=np.float64)
        t = np.asarray(t, dtype=np.int64)
        if obs.ndim != 2 or obs.shape[1] != cfg.obs_dim:
            raise ArgumentError(f"observation batch shape {obs.shape} does not match obs_dim={cfg.obs_dim}")
        if t.shape != (obs.shape[0],):
            raise ArgumentError(f"step array shape {t.shape} does not match batch {obs.shape[0]}")
        if t.size and (t.min() < 0 or t.max() >= cfg.horizon):
            raise ArgumentError(f"steps must lie in [0, {cfg.horizon})")
        if cfg.variant == TIME_OBS:
            obs = np.concatenate([obs, (t / cfg.horizon)[:, None]], axis=1)
        return obs, t

    def forward(self, obs, t):
        """Batched forward pass.

        Returns ``(mean, logstd, head_index)`` where ``mean`` and ``logstd``
        are [batch, action_dim] tensors taken from each sample's scheduled
        head.  Only heads that occur in the batch are evaluated; the rest
        receive zero gradient either way.
        """
        x, t = self._inputs(obs, t)
        cfg = self.config
        idx = head_schedule(t, cfg.horizon, cfg.heads)
        h = nd.mlp(x, self.trunk, activate_last=True)
        present = np.unique(idx)
        pos = np.searchsorted(present, idx)
        means = [nd.affine(h, self.heads[j].weight, self.heads[j].bias) for j in present]
        mean = nd.select_heads(means, pos)
        logstd = nd.select_heads([self.heads[j].logstd for j in present], pos)
        return mean, logstd, idx

    def act(self, obs, t: int) -> ActionDistribution:
        """Untaped single-observation pass; bitwise equal to :meth:`forward`."""
        cfg = self.config
        x = np.asarray(obs, dtype=np.float64)
        if x.shape != (cfg.obs_dim,):
            raise ArgumentError(f"observation shape {x.shape} does not match obs_dim={cfg.obs_dim}")
        if cfg.variant == TIME_OBS:
            x = np.append(x, t / cfg.horizon)
        x = x[None, :]
        for w, b in self.trunk:
            x = np.tanh(nd.rowwise_matmul(x, w.data) + b.data)
        j = select_head(t, cfg.horizon, cfg.heads)
        head = self.heads[j]
        mean = (nd.rowwise_matmul(x, head.weight.data) + head.bias.data)[0]
        return ActionDistribution(mean, head.logstd.data.copy(), j, int(t))


def build_policy(config: PolicyConfig) -> Policy:
    rng = np.random.default_rng(config.seed)
    sizes = [config.input_dim, *config.trunk_widths]
    trunk = [nd.init_affine(rng, sizes[i], sizes[i + 1], f"trunk.{i}") for i in range(len(sizes) - 1)]
    heads = []
    for j in range(config.heads):
        w, b = nd.init_affine(rng, sizes[-1], config.action_dim, f"head.{j}", scale=HEAD_INIT_SCALE)
        logstd = Tensor(np.full(config.action_dim, INITIAL_LOGSTD), f"head.{j}.logstd")
        heads.append(Head(w, b, logstd))
    return Policy(config, trunk, heads)


def policy_forward(policy: Policy, obs, t: int) -> ActionDistribution:
    if not 0 <= int(t) < policy.config.horizon:
        raise ArgumentError(f"step t={t} outside [0, {policy.config.horizon})")
    return policy.act(obs, int(t))


def sample_action(dist: ActionDistribution, rng: np.random.Generator):
    """Draw ``mean + std * noise``; the log-prob is of the unclipped draw."""
    noise = rng.standard_normal(dist.mean.shape[0])
    action = dist.mean + np.exp(dist.logstd) * noise
    logprob = nd.gaussian_logprob(dist.mean[None], dist.logstd[None], action[None]).data[0]
    return action, float(logprob)


def log_prob_and_entropy(policy: Policy, obs, t, action):
    """Differentiable log-prob and entropy of ``action`` under the scheduled head.

    Accepts a single transition (returns scalar tensors) or a batch with
    ``obs`` [B, obs_dim], ``t`` [B], ``action`` [B, action_dim] (returns [B]
    tensors).
    """
    obs = np.asarray(obs, dtype=np.float64)
    action = np.asarray(action, dtype=np.float64)
    single = obs.ndim == 1
    if single:
        obs, action, t = obs[None], action[None], [int(t)]
    if action.ndim != 2 or action.shape != (obs.shape[0], policy.config.action_dim):
        raise ArgumentError(f"action shape {action.shape} does not match action_dim={policy.config.action_dim}")
    mean, logstd, _ = policy.forward(obs, t)
    logprob = nd.gaussian_logprob(mean, logstd, action)
    entropy = nd.gaussian_entropy(logstd)
    if single:
        return nd.sum(logprob), nd.sum(entropy)
    return logprob, entropy
