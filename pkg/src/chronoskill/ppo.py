"""PPO with generalized advantage estimation for fixed-horizon episodes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ndmath as nd
from .envs import EnvSpec, env_reset, env_step
from .errors import ArgumentError, NumericError
from .policy import VANILLA, Policy, canonical_variant, log_prob_and_entropy, policy_forward, sample_action


@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    epochs: int = 10
    minibatch: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    steps_per_iter: int = 2000
    iterations: int = 100

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ArgumentError(f"gamma={self.gamma} must lie in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ArgumentError(f"lam={self.lam} must lie in [0, 1]")
        if self.clip < 0.0:
            raise ArgumentError(f"clip={self.clip} must be non-negative")
        if self.epochs < 1 or self.minibatch < 1 or self.steps_per_iter < 1 or self.iterations < 0:
            raise ArgumentError("epochs, minibatch and steps_per_iter must be positive; iterations non-negative")


# ----------------------------------------------------------------- critic


@dataclass
class ValueNet:
    """State-value MLP.  All variants except vanilla also see ``t / T``."""

    obs_dim: int
    variant: str
    horizon: int
    layers: list = field(default_factory=list)

    @property
    def uses_time(self) -> bool:
        return self.variant != VANILLA

    @property
    def input_dim(self) -> int:
        return self.obs_dim + (1 if self.uses_time else 0)

    def parameters(self) -> list:
        return [p for layer in self.layers for p in layer]

    def named_parameters(self) -> dict:
        return {p.name: p for p in self.parameters()}

    def forward(self, obs, t) -> nd.Tensor:
        obs = np.asarray(obs, dtype=np.float64)
        t = np.asarray(t, dtype=np.int64)
        if obs.ndim != 2 or obs.shape[1] != self.obs_dim or t.shape != (obs.shape[0],):
            raise ArgumentError(
                f"value input shapes obs {obs.shape}, t {t.shape} do not match obs_dim={self.obs_dim}"
            )
        if self.uses_time:
            obs = np.concatenate([obs, (t / self.horizon)[:, None]], axis=1)
        out = nd.mlp(obs, self.layers)
        return nd.reshape(out, (obs.shape[0],))

    def predict(self, obs, t: int) -> float:
        """Untaped single-observation value; bitwise equal to :meth:`forward`."""
        x = np.asarray(obs, dtype=np.float64)
        if self.uses_time:
            x = np.append(x, t / self.horizon)
        x = x[None, :]
        for i, (w, b) in enumerate(self.layers):
            x = nd.rowwise_matmul(x, w.data) + b.data
            if i < len(self.layers) - 1:
                x = np.tanh(x)
        return float(x[0, 0])


def build_value_net(obs_dim: int, variant: str, horizon: int, widths=(64, 64), seed: int = 0) -> ValueNet:
    """Hidden layers use the policy's uniform init; the output layer starts at zero."""
    net = ValueNet(obs_dim, canonical_variant(variant), horizon)
    rng = np.random.default_rng(seed)
    sizes = [net.input_dim, *widths, 1]
    for i in range(len(sizes) - 1):
        last = i == len(sizes) - 2
        net.layers.append(nd.init_affine(rng, sizes[i], sizes[i + 1], f"value.{i}", scale=0.0 if last else 1.0))
    return net


def value_forward(value_net: ValueNet, obs, t: int, variant: str | None = None) -> float:
    if variant is not None and canonical_variant(variant) != value_net.variant:
        raise ArgumentError(f"value net built for {value_net.variant!r}, called as {variant!r}")
    if not 0 <= int(t) < value_net.horizon:
        raise ArgumentError(f"step t={t} outside [0, {value_net.horizon})")
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (value_net.obs_dim,):
        raise ArgumentError(f"observation shape {obs.shape}, expected ({value_net.obs_dim},)")
    return value_net.predict(obs, int(t))


# ----------------------------------------------------------------- rollouts


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    logprobs: np.ndarray
    values: np.ndarray
    t: np.ndarray
    heads: np.ndarray
    terminals: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    episode_returns: list = field(default_factory=list)
    episode_successes: list = field(default_factory=list)

    def __len__(self):
        return len(self.rewards)


def collect_rollouts(policy: Policy, value_net: ValueNet, spec: EnvSpec, n_steps: int, rng, env_rng=None) -> RolloutBuffer:
    """Run ``n_steps / T`` whole episodes with sampled actions.

    Each episode is reset with a seed drawn from ``env_rng`` (``rng`` if not
    given); head scheduling restarts at ``t = 0`` every episode.
    """
    horizon = spec.horizon
    if n_steps % horizon or n_steps <= 0:
        raise ArgumentError(f"n_steps={n_steps} must be a positive multiple of T={horizon}")
    env_rng = rng if env_rng is None else env_rng
    cols = {k: [] for k in ("obs", "actions", "rewards", "logprobs", "values", "t", "heads", "terminals")}
    ep_returns, ep_success = [], []
    for _ in range(n_steps // horizon):
        state, obs = env_reset(spec, int(env_rng.integers(2**63)))
        total, success = 0.0, False
        for t in range(horizon):
            dist = policy_forward(policy, obs, t)
            action, logprob = sample_action(dist, rng)
            value = value_net.predict(obs, t)
            state, res = env_step(state, action)
            cols["obs"].append(obs)
            cols["actions"].append(action)
            cols["rewards"].append(res.reward)
            cols["logprobs"].append(logprob)
            cols["values"].append(value)
            cols["t"].append(t)
            cols["heads"].append(dist.head)
            cols["terminals"].append(res.terminal)
            total += res.reward
            success = success or res.success
            obs = res.observation
        ep_returns.append(total)
        ep_success.append(success)
    return RolloutBuffer(
        obs=np.array(cols["obs"]),
        actions=np.array(cols["actions"]),
        rewards=np.array(cols["rewards"]),
        logprobs=np.array(cols["logprobs"]),
        values=np.array(cols["values"]),
        t=np.array(cols["t"], dtype=np.int64),
        heads=np.array(cols["heads"], dtype=np.int64),
        terminals=np.array(cols["terminals"], dtype=bool),
        episode_returns=ep_returns,
        episode_successes=ep_success,
    )


def gae(rewards, values, terminals, gamma: float, lam: float):
    """Generalized advantage estimates and returns.

    A terminal step does not bootstrap from the next value and cuts the
    advantage recursion, so concatenated episodes can be processed together.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    nonterminal = 1.0 - np.asarray(terminals, dtype=np.float64)
    n = len(rewards)
    adv = np.zeros(n)
    next_value, next_adv = 0.0, 0.0
    for i in range(n - 1, -1, -1):
        delta = rewards[i] + gamma * next_value * nonterminal[i] - values[i]
        next_adv = delta + gamma * lam * nonterminal[i] * next_adv
        adv[i] = next_adv
        next_value = values[i]
    return adv, adv + values


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> RolloutBuffer:
    buffer.advantages, buffer.returns = gae(buffer.rewards, buffer.values, buffer.terminals, gamma, lam)
    return buffer


# ------------------------------------------------------------------ update


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float
    initial_max_ratio_dev: float
    initial_clip_fraction: float


class Optimizers:
    """Separate Adam instances for the policy and the critic."""

    def __init__(self, policy: Policy, value_net: ValueNet, lr: float):
        self.policy = nd.Adam(policy.parameters(), lr=lr)
        self.value = nd.Adam(value_net.parameters(), lr=lr)


def _ratio_check(policy: Policy, buffer: RolloutBuffer, clip: float):
    mean, logstd, _ = policy.forward(buffer.obs, buffer.t)
    logprob = nd.gaussian_logprob(mean, logstd, buffer.actions).data
    ratio = np.exp(logprob - buffer.logprobs)
    return float(np.max(np.abs(ratio - 1.0))), float(np.mean(np.abs(ratio - 1.0) > clip))


def ppo_update(policy: Policy, value_net: ValueNet, buffer: RolloutBuffer, config: PPOConfig,
               rng: np.random.Generator, optimizers: Optimizers | None = None) -> UpdateStats:
    """Clipped-surrogate epochs over shuffled minibatches.

    Each sample's log-prob is re-evaluated at its stored ``(obs, t)``, so it
    only ever trains the head that produced it.  Policy and critic gradients
    are norm-clipped separately before their Adam steps.
    """
    if buffer.advantages is None:
        raise ArgumentError("buffer has no advantages; run compute_gae first")
    if optimizers is None:
        optimizers = Optimizers(policy, value_net, config.lr)
    adv_all = buffer.advantages
    adv_all = (adv_all - adv_all.mean()) / (adv_all.std() + 1e-8)
    init_dev, init_clip = _ratio_check(policy, buffer, config.clip)

    policy_params = policy.parameters()
    value_params = value_net.parameters()
    n = len(buffer)
    lo, hi = 1.0 - config.clip, 1.0 + config.clip
    acc = {"policy_loss": [], "value_loss": [], "entropy": [], "clip_fraction": [], "approx_kl": []}
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch):
            mb = order[start:start + config.minibatch]
            adv = adv_all[mb]
            try:
                with nd.Tape() as tape:
                    logprob, entropy = log_prob_and_entropy(policy, buffer.obs[mb], buffer.t[mb], buffer.actions[mb])
                    ratio = nd.exp(logprob - buffer.logprobs[mb])
                    surrogate = nd.minimum(ratio * adv, nd.clip(ratio, lo, hi) * adv)
                    ent = nd.mean(entropy)
                    policy_loss = -nd.mean(surrogate) - config.entropy_coef * ent
                    value_loss = nd.mean(nd.square(value_net.forward(buffer.obs[mb], buffer.t[mb]) - buffer.returns[mb]))
                    loss = policy_loss + config.value_coef * value_loss
                grads = nd.backward(tape, loss, policy_params + value_params)
            except NumericError as exc:
                raise NumericError(
                    f"{exc} (epoch {epoch}, minibatch at {start}, "
                    f"advantage range [{adv.min():.3g}, {adv.max():.3g}], "
                    f"return range [{buffer.returns[mb].min():.3g}, {buffer.returns[mb].max():.3g}])"
                ) from exc
            pg, _ = nd.clip_grad_norm([grads[p] for p in policy_params], config.max_grad_norm)
            vg, _ = nd.clip_grad_norm([grads[p] for p in value_params], config.max_grad_norm)
            optimizers.policy.step(pg)
            optimizers.value.step(vg)

            r = ratio.data
            acc["policy_loss"].append(policy_loss.item())
            acc["value_loss"].append(value_loss.item())
            acc["entropy"].append(ent.item())
            acc["clip_fraction"].append(float(np.mean(np.abs(r - 1.0) > config.clip)))
            acc["approx_kl"].append(float(np.mean((r - 1.0) - np.log(r))))
    stats = {k: float(np.mean(v)) for k, v in acc.items()}
    if not all(math.isfinite(v) for v in stats.values()):
        raise NumericError(f"non-finite update statistics {stats}")
    return UpdateStats(**stats, initial_max_ratio_dev=init_dev, initial_clip_fraction=init_clip)
