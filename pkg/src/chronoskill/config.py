"""Run configuration and its flat ``key = value`` file format.

Example file::

    env = pick-place-lite
    seed = 0
    out_dir = runs/pp-mh
    eval_episodes = 20
    eval_interval = 10
    policy.variant = multi-head
    policy.obs_dim = 7
    policy.action_dim = 3
    policy.heads = 8
    policy.horizon = 100
    policy.trunk_widths = 64,64
    policy.seed = 0
    ppo.gamma = 0.99
    ...

Blank lines and lines starting with ``#`` are ignored.  Every key must be
known; missing keys take their defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

from .envs import PROBE, make_spec
from .errors import ArgumentError, FormatError
from .policy import MULTI_HEAD, PolicyConfig, canonical_variant
from .ppo import PPOConfig

DEFAULT_HEADS = {PROBE: 2}
DEFAULT_MANIPULATION_HEADS = 8


def derive_seed(master: int, tag: str) -> int:
    """64-bit seed from SHA-256 of ``"<master>:<tag>"``."""
    digest = hashlib.sha256(f"{int(master)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RunConfig:
    env: str = "push-lite"
    policy: PolicyConfig = field(default_factory=lambda: PolicyConfig(obs_dim=6, action_dim=2, horizon=100))
    ppo: PPOConfig = field(default_factory=PPOConfig)
    seed: int = 0
    out_dir: str = "runs/default"
    eval_episodes: int = 20
    eval_interval: int = 10

    def __post_init__(self):
        spec = make_spec(self.env)
        p = self.policy
        if (p.obs_dim, p.action_dim, p.horizon) != (spec.obs_dim, spec.action_dim, spec.horizon):
            raise ArgumentError(
                f"policy dims (obs={p.obs_dim}, act={p.action_dim}, T={p.horizon}) do not match "
                f"{spec.name} (obs={spec.obs_dim}, act={spec.action_dim}, T={spec.horizon})"
            )
        if self.ppo.steps_per_iter % spec.horizon:
            raise ArgumentError(f"steps_per_iter={self.ppo.steps_per_iter} is not a multiple of T={spec.horizon}")
        if self.eval_episodes < 1 or self.eval_interval < 1:
            raise ArgumentError("eval_episodes and eval_interval must be positive")

    @classmethod
    def for_env(cls, env: str, variant: str = MULTI_HEAD, heads: int | None = None, **overrides) -> "RunConfig":
        """Config with policy dimensions filled in from the environment."""
        spec = make_spec(env)
        variant = canonical_variant(variant)
        if heads is None:
            heads = DEFAULT_HEADS.get(env, DEFAULT_MANIPULATION_HEADS)
        policy_kw = overrides.pop("policy", {})
        ppo_kw = overrides.pop("ppo", {})
        if env == PROBE:
            ppo_kw.setdefault("steps_per_iter", 200)
        policy = PolicyConfig(variant=variant, obs_dim=spec.obs_dim, action_dim=spec.action_dim,
                              heads=heads, horizon=spec.horizon, **policy_kw)
        return cls(env=env, policy=policy, ppo=PPOConfig(**ppo_kw), **overrides)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            if raw not in ("true", "false"):
                raise ValueError(raw)
            return raw == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        raise FormatError(f"bad value {raw!r} for key {key!r}") from None


def _flatten(config: RunConfig):
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if dataclasses.is_dataclass(value):
            for sub in dataclasses.fields(value):
                yield f"{f.name}.{sub.name}", getattr(value, sub.name)
        else:
            yield f.name, value


def dumps_config(config: RunConfig) -> str:
    return "".join(f"{key} = {_format(value)}\n" for key, value in _flatten(config))


def loads_config(text: str) -> RunConfig:
    defaults = dict(_flatten(RunConfig()))
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or key not in defaults:
            raise FormatError(f"line {lineno}: unrecognised entry {line!r}")
        values[key] = _parse(raw, defaults[key], key)
    top, sections = {}, {"policy": {}, "ppo": {}}
    for key, value in values.items():
        section, _, name = key.rpartition(".")
        (sections[section] if section else top)[name] = value
    env = top.get("env", RunConfig.env)
    spec = make_spec(env)
    policy_kw = {"obs_dim": spec.obs_dim, "action_dim": spec.action_dim, "horizon": spec.horizon}
    policy_kw.update(sections["policy"])
    return RunConfig(policy=PolicyConfig(**policy_kw), ppo=PPOConfig(**sections["ppo"]), **top)


def save_config(config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_config(config))


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return loads_config(fh.read())
