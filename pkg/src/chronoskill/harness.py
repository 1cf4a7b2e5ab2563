"""Training runs, evaluation, variant comparisons and trajectory dumps."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import build_agent, load_checkpoint, save_checkpoint
from .config import RunConfig, derive_seed, save_config
from .envs import EnvSpec, env_reset, env_step, make_spec, trajectory_record
from .errors import ChronoskillError, DimensionError, RunError
from .policy import MULTI_HEAD, TIME_OBS, VANILLA, Policy, canonical_variant, policy_forward
from .ppo import Optimizers, UpdateStats, collect_rollouts, compute_gae, ppo_update

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "iteration", "env_steps", "mean_return", "return_std", "success_rate",
    "policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl",
)
CHECKPOINT_NAME = "checkpoint.ckpt"
METRICS_NAME = "metrics.csv"


@dataclass
class EvalReport:
    mean_return: float
    return_std: float
    success_rate: float
    episodes: int
    seeds: list = field(default_factory=list)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def run_episode(policy: Policy, spec: EnvSpec, seed: int, record: list | None = None):
    """One episode with mean actions.  Returns ``(return, any_success)``."""
    state, obs = env_reset(spec, seed)
    total, success = 0.0, False
    for t in range(spec.horizon):
        dist = policy_forward(policy, obs, t)
        state, res = env_step(state, dist.mean)
        if record is not None:
            applied = np.clip(dist.mean, spec.action_low, spec.action_high)
            record.append(trajectory_record(t, dist.head, state, applied, res.reward, res.success))
        total += res.reward
        success = success or res.success
        obs = res.observation
    return total, success


def evaluate_policy(policy: Policy, spec: EnvSpec, n_episodes: int, base_seed: int) -> EvalReport:
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    seeds = [base_seed + i for i in range(n_episodes)]
    results = [run_episode(policy, spec, s) for s in seeds]
    returns = np.array([r for r, _ in results])
    return EvalReport(
        mean_return=float(returns.mean()),
        return_std=float(returns.std()),
        success_rate=float(np.mean([s for _, s in results])),
        episodes=n_episodes,
        seeds=seeds,
    )


def _check_dims(config: RunConfig, spec: EnvSpec):
    p = config.policy
    if (p.obs_dim, p.action_dim, p.horizon) != (spec.obs_dim, spec.action_dim, spec.horizon):
        raise DimensionError(
            f"checkpoint expects obs_dim={p.obs_dim}, action_dim={p.action_dim}, T={p.horizon}; "
            f"{spec.name} has obs_dim={spec.obs_dim}, action_dim={spec.action_dim}, T={spec.horizon}"
        )


def evaluate(checkpoint_path, spec: EnvSpec | str, n_episodes: int, base_seed: int) -> EvalReport:
    spec = make_spec(spec) if isinstance(spec, str) else spec
    policy, _, config = load_checkpoint(checkpoint_path)
    _check_dims(config, spec)
    return evaluate_policy(policy, spec, n_episodes, base_seed)


def dump_trajectory(checkpoint_path, spec: EnvSpec | str, seed: int, output_path) -> list[str]:
    """Write one deterministic episode as JSON lines, one record per step."""
    spec = make_spec(spec) if isinstance(spec, str) else spec
    policy, _, config = load_checkpoint(checkpoint_path)
    _check_dims(config, spec)
    records: list[str] = []
    run_episode(policy, spec, seed, records)
    Path(output_path).write_text("".join(r + "\n" for r in records))
    return records


# ----------------------------------------------------------------- training


@dataclass
class TrainingResult:
    config: RunConfig
    updates: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    final: EvalReport | None = None
    policy: Policy | None = None
    value_net: object = None


def seeds_for(master: int) -> dict:
    """Independent stream seeds for one run."""
    return {tag: derive_seed(master, tag) for tag in ("env", "policy", "sample", "value", "eval")}


def eval_base_seed(master: int) -> int:
    return derive_seed(master, "eval") >> 33


def _metrics_row(iteration, env_steps, report: EvalReport, stats: UpdateStats | None):
    losses = (
        (stats.policy_loss, stats.value_loss, stats.entropy, stats.clip_fraction, stats.approx_kl)
        if stats else (math.nan,) * 5
    )
    return [iteration, env_steps, report.mean_return, report.return_std, report.success_rate, *losses]


def run_training(config: RunConfig, write: bool = True, on_update=None) -> TrainingResult:
    """Train one agent and write ``config.txt``, ``metrics.csv``,
    ``eval.jsonl`` and ``checkpoint.ckpt`` under ``config.out_dir``.

    ``on_update(iteration, stats)`` is called after every PPO update.
    """
    spec = make_spec(config.env)
    seeds = seeds_for(config.seed)
    policy, value_net = build_agent(config, seeds["policy"], seeds["value"])
    sample_rng = np.random.default_rng(seeds["sample"])
    env_rng = np.random.default_rng(seeds["env"])
    eval_base = eval_base_seed(config.seed)
    optimizers = Optimizers(policy, value_net, config.ppo.lr)
    result = TrainingResult(config, policy=policy, value_net=value_net)

    out = Path(config.out_dir)
    rows = []

    def evaluate_now(iteration, stats):
        report = evaluate_policy(policy, spec, config.eval_episodes, eval_base)
        result.reports.append((iteration, report))
        rows.append(_metrics_row(iteration, iteration * config.ppo.steps_per_iter, report, stats))
        log.info("%s %s it=%d return=%.3f success=%.2f", config.env, config.policy.variant,
                 iteration, report.mean_return, report.success_rate)
        return report

    try:
        if write:
            out.mkdir(parents=True, exist_ok=True)
            save_config(config, out / "config.txt")
        evaluate_now(0, None)
        for iteration in range(1, config.ppo.iterations + 1):
            buffer = collect_rollouts(policy, value_net, spec, config.ppo.steps_per_iter, sample_rng, env_rng)
            compute_gae(buffer, config.ppo.gamma, config.ppo.lam)
            stats = ppo_update(policy, value_net, buffer, config.ppo, sample_rng, optimizers)
            result.updates.append(stats)
            if on_update is not None:
                on_update(iteration, stats)
            if iteration % config.eval_interval == 0 or iteration == config.ppo.iterations:
                evaluate_now(iteration, stats)
    except ChronoskillError as exc:
        if write:
            (out / "run.log").write_text(f"run failed: {exc}\n{traceback.format_exc()}")
        raise RunError(f"training run in {out} failed: {exc}") from exc

    result.final = result.reports[-1][1]
    if write:
        try:
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(METRIC_COLUMNS)
            writer.writerows([[_fmt(v) for v in row] for row in rows])
            (out / METRICS_NAME).write_text(buf.getvalue())
            (out / "eval.jsonl").write_text(
                "".join(json.dumps({"iteration": it, **asdict(r)}) + "\n" for it, r in result.reports)
            )
            save_checkpoint(policy, value_net, config, out / CHECKPOINT_NAME)
        except OSError as exc:
            raise RunError(f"cannot write run artifacts to {out}: {exc}") from exc
    return result


# --------------------------------------------------------------- comparison


PAIRS = ((MULTI_HEAD, VANILLA), (TIME_OBS, VANILLA), (MULTI_HEAD, TIME_OBS))


@dataclass
class CellSummary:
    env: str
    variant: str
    reports: list
    failures: list = field(default_factory=list)

    def _values(self, attr):
        return np.array([getattr(r, attr) for r in self.reports if r is not None])

    def aggregate(self, attr: str):
        vals = self._values(attr)
        if vals.size == 0:
            return math.nan, math.nan
        return float(vals.mean()), float(vals.std())


@dataclass
class ComparisonTable:
    cells: dict
    seeds: list
    verdicts: dict = field(default_factory=dict)

    def mean(self, env, variant, attr="success_rate") -> float:
        return self.cells[(env, variant)].aggregate(attr)[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["env", "variant", "seed", "status", "mean_return", "return_std", "success_rate"])
        for (env, variant), cell in self.cells.items():
            for seed, report in zip(self.seeds, cell.reports):
                if report is None:
                    writer.writerow([env, variant, seed, "failed", "", "", ""])
                else:
                    writer.writerow([env, variant, seed, "ok", _fmt(report.mean_return),
                                     _fmt(report.return_std), _fmt(report.success_rate)])
        return buf.getvalue()

    def format(self) -> str:
        lines = [f"{'env':<18}{'variant':<12}{'success (mean±std)':<22}{'return (mean±std)':<24}failed"]
        for (env, variant), cell in self.cells.items():
            sm, ss = cell.aggregate("success_rate")
            rm, rs = cell.aggregate("mean_return")
            lines.append(f"{env:<18}{variant:<12}{sm:6.3f} ± {ss:<11.3f}{rm:9.3f} ± {rs:<11.3f}{len(cell.failures)}")
        for (env, a, b, metric), verdict in self.verdicts.items():
            lines.append(f"{env}: {a} > {b} on {metric}: {verdict}")
        return "\n".join(lines) + "\n"


def _run_cell(args):
    config, = args
    try:
        return run_training(config).final, None
    except ChronoskillError as exc:
        return None, str(exc)


def compare(envs, variants, seeds: int, base: RunConfig | None = None, out_dir="runs/compare",
            heads: int | None = None, iterations: int | None = None, workers: int = 1) -> ComparisonTable:
    """Train every (env, variant, seed) cell and tabulate final evaluations.

    Cell seeds are ``base.seed + i`` for ``i < seeds``; run directories are
    ``<out_dir>/<env>/<variant>/seed<seed>``.  Writes ``comparison.csv`` and
    ``comparison.txt`` into ``out_dir``.
    """
    if seeds < 1:
        raise ValueError("seeds must be at least 1")
    base = base or RunConfig()
    variants = [canonical_variant(v) for v in variants]
    seed_list = [base.seed + i for i in range(seeds)]
    jobs, keys = [], []
    for env in envs:
        for variant in variants:
            for seed in seed_list:
                cfg = RunConfig.for_env(
                    env, variant, heads,
                    policy={"trunk_widths": base.policy.trunk_widths},
                    ppo={**asdict(base.ppo),
                         **({"iterations": iterations} if iterations is not None else {}),
                         **({"steps_per_iter": 200} if env == "two-phase-probe" else {})},
                    seed=seed,
                    out_dir=str(Path(out_dir) / env / variant / f"seed{seed}"),
                    eval_episodes=base.eval_episodes,
                    eval_interval=base.eval_interval,
                )
                jobs.append((cfg,))
                keys.append((env, variant))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_run_cell, jobs))
    else:
        outcomes = [_run_cell(job) for job in jobs]

    cells: dict = {}
    for key, (report, error) in zip(keys, outcomes):
        cell = cells.setdefault(key, CellSummary(*key, reports=[]))
        cell.reports.append(report)
        if error is not None:
            cell.failures.append(error)
    table = ComparisonTable(cells, seed_list)
    for env in envs:
        for a, b in PAIRS:
            if (env, a) in cells and (env, b) in cells:
                for metric in ("success_rate", "mean_return"):
                    table.verdicts[(env, a, b, metric)] = table.mean(env, a, metric) > table.mean(env, b, metric)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(table.to_csv())
    (out / "comparison.txt").write_text(table.format())
    return table
