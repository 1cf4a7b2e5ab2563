"""Time-indexed multi-head PPO policies on small kinematic manipulation tasks."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, derive_seed, load_config, save_config
from .envs import ENV_NAMES, EnvSpec, env_reset, env_step, make_spec, optimal_return
from .errors import (
    ArgumentError,
    ChronoskillError,
    DimensionError,
    FormatError,
    NumericError,
    RunError,
    UnsupportedVersionError,
    UsageError,
)
from .harness import EvalReport, compare, dump_trajectory, evaluate, run_training
from .plotting import plot_curves
from .policy import (
    MULTI_HEAD,
    TIME_OBS,
    VANILLA,
    Policy,
    PolicyConfig,
    build_policy,
    log_prob_and_entropy,
    policy_forward,
    sample_action,
    select_head,
)
from .ppo import PPOConfig, build_value_net, collect_rollouts, compute_gae, ppo_update, value_forward

__version__ = "0.1.0"
