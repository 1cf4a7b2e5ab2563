"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The comparison matrix behind A7 and A8 trains 25 agents at the default
budget and dominates the runtime of this module.
"""

import time

import numpy as np
import pytest
from conftest import record

from chronoskill import ndmath as nd
from chronoskill.config import RunConfig
from chronoskill.envs import make_spec, optimal_return
from chronoskill.harness import compare, dump_trajectory, run_training
from chronoskill.policy import (
    PolicyConfig,
    build_policy,
    head_schedule,
    log_prob_and_entropy,
    policy_forward,
    sample_action,
    select_head,
)
from chronoskill.ppo import PPOConfig, build_value_net, collect_rollouts, compute_gae, gae, ppo_update

PROBE_SEEDS = range(5)
PROBE_ITERATIONS = 100
MATRIX_SEEDS = 5


def test_a1_head_partition_exhaustive():
    start = time.perf_counter()
    bad = []
    for horizon in range(1, 513):
        steps = np.arange(horizon)
        for heads in range(1, horizon + 1):
            js = head_schedule(steps, horizon, heads)
            step = np.diff(js)
            lengths = np.bincount(js, minlength=heads)
            # when k divides T the two bounds coincide, forcing equal blocks
            floor, ceil = horizon // heads, -(-horizon // heads)
            ok = (
                js[0] == 0 and js[-1] == heads - 1 and step.min(initial=0) >= 0 and step.max(initial=0) <= 1
                and lengths.min() >= floor and lengths.max() <= ceil
            )
            if not ok:
                bad.append((horizon, heads))
    # the vectorised schedule must agree with the scalar rule it is built from
    spot = all(select_head(t, 512, k) == head_schedule(np.array([t]), 512, k)[0]
               for k in (1, 3, 8, 100, 512) for t in range(512))
    elapsed = time.perf_counter() - start
    passed = record("A1", not bad and spot and elapsed < 5.0,
                    f"{131328} (T,k) pairs, {len(bad)} violations, {elapsed:.2f}s")
    assert passed, bad[:5]


def test_a2_worked_example():
    js = [select_head(t, 100, 20) for t in range(10)]
    passed = record("A2", js == [0] * 5 + [1] * 5, f"heads for t=0..9: {js}")
    assert passed


def _random_net(rng):
    widths = [int(v) for v in rng.integers(1, 7, size=int(rng.integers(2, 5)))]
    layers = [
        (nd.Tensor(rng.normal(size=(a, b)) * 0.7, f"w{i}"), nd.Tensor(rng.normal(size=b) * 0.3, f"b{i}"))
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
    ]
    x = rng.normal(size=(int(rng.integers(1, 4)), widths[0]))
    action = rng.normal(size=(x.shape[0], widths[-1]))
    logstd = nd.Tensor(rng.normal(size=action.shape) * 0.3, "logstd")
    params = [p for layer in layers for p in layer] + [logstd]

    def loss():
        mean = nd.mlp(x, layers)
        return nd.sum(nd.gaussian_logprob(mean, logstd, action)) + nd.sum(nd.square(mean))

    return params, loss


def test_a3_gradient_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        params, loss_fn = _random_net(rng)
        with nd.Tape() as tape:
            loss = loss_fn()
        grads = nd.backward(tape, loss, params)
        for p in params:
            def f(v, p=p):
                saved = p.data
                p.data = v
                try:
                    return loss_fn().item()
                finally:
                    p.data = saved

            fd = nd.finite_diff_grad(f, p.data, 1e-6)
            scale = max(np.abs(fd).max(), np.abs(grads[p]).max())
            if scale > 1e-8:
                worst = max(worst, float(np.abs(fd - grads[p]).max() / scale))

    # single-transition losses on a multi-head policy touch one head only
    leaks = 0
    for seed in range(20):
        policy = build_policy(PolicyConfig("multi-head", 4, 2, 5, 100, (8, 8), seed))
        for p in policy.parameters():
            p.data = rng.normal(size=p.data.shape)
        t = int(rng.integers(0, 100))
        with nd.Tape() as tape:
            lp, ent = log_prob_and_entropy(policy, rng.normal(size=4), t, rng.normal(size=2))
            loss = lp + ent
        grads = nd.backward(tape, loss, policy.parameters())
        j = select_head(t, 100, 5)
        leaks += sum(int(np.any(grads[p] != 0.0)) for i, h in enumerate(policy.heads) if i != j
                     for p in h.parameters())
    elapsed = time.perf_counter() - start
    passed = record("A3", worst < 1e-5 and leaks == 0 and elapsed < 30.0,
                    f"max relative error {worst:.2e}, nonzero unselected-head grads {leaks}, {elapsed:.1f}s")
    assert passed


def _double_sum(rewards, values, gamma, lam):
    n = len(rewards)
    v = np.append(values, 0.0)
    adv = np.zeros(n)
    for t in range(n):
        for u in range(t, n):
            adv[t] += (gamma * lam) ** (u - t) * (rewards[u] + gamma * v[u + 1] - v[u])
    return adv


def test_a4_gae_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        r, v = rng.normal(size=n), rng.normal(size=n)
        gamma, lam = rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)
        adv, _ = gae(r, v, [False] * (n - 1) + [True], gamma, lam)
        worst = max(worst, float(np.abs(adv - _double_sum(r, v, gamma, lam)).max()))
    elapsed = time.perf_counter() - start
    passed = record("A4", worst < 1e-10 and elapsed < 5.0, f"max abs error {worst:.2e}, {elapsed:.2f}s")
    assert passed


@pytest.fixture(scope="module")
def probe_runs():
    """Probe training for every seed and both variants, with the ratio
    statistics of every update."""
    start = time.perf_counter()
    runs = {}
    for variant in ("multi-head", "vanilla"):
        for seed in PROBE_SEEDS:
            ratios = []
            config = RunConfig.for_env("two-phase-probe", variant, ppo={"iterations": PROBE_ITERATIONS},
                                       seed=seed, eval_episodes=5, eval_interval=10)
            result = run_training(config, write=False, on_update=lambda i, s: ratios.append(
                (s.initial_max_ratio_dev, s.initial_clip_fraction)))
            runs[(variant, seed)] = (result, ratios)
    return runs, time.perf_counter() - start


def test_a5_ratio_sanity(probe_runs):
    runs, _ = probe_runs
    ratios = [r for _, rs in runs.values() for r in rs]
    config = RunConfig.for_env("pick-place-lite", "multi-head", ppo={"iterations": 3}, seed=11)
    run_training(config, write=False, on_update=lambda i, s: ratios.append(
        (s.initial_max_ratio_dev, s.initial_clip_fraction)))
    worst = max(d for d, _ in ratios)
    clipped = max(c for _, c in ratios)
    passed = record("A5", worst < 1e-9 and clipped == 0.0,
                    f"{len(ratios)} updates, max|ratio-1| {worst:.1e}, max initial clip fraction {clipped}")
    assert passed


def test_a6_probe_capacity(probe_runs):
    runs, elapsed = probe_runs
    optimum = optimal_return(make_spec("two-phase-probe"))
    mh = [runs[("multi-head", s)][0].final.mean_return for s in PROBE_SEEDS]
    vanilla_peak = [max(r.mean_return for _, r in runs[("vanilla", s)][0].reports) for s in PROBE_SEEDS]
    hits = sum(r >= 0.95 * optimum for r in mh)
    passed = record(
        "A6", hits >= 4 and max(vanilla_peak) <= 0.5 and elapsed < 300.0,
        f"multi-head final returns {mh}, vanilla best {vanilla_peak}, "
        f"{PROBE_ITERATIONS} iterations, {elapsed:.0f}s",
    )
    assert passed


@pytest.fixture(scope="module")
def matrix(tmp_path_factory):
    """Default-budget comparison: three variants on pick-place, two on push."""
    out = tmp_path_factory.mktemp("matrix")
    base = RunConfig()
    tables, timing = {}, {}
    for env, variants in (("pick-place-lite", ["multi-head", "vanilla", "time-obs"]),
                          ("push-lite", ["multi-head", "vanilla"])):
        start = time.perf_counter()
        tables[env] = compare([env], variants, MATRIX_SEEDS, base, out_dir=out / env)
        timing[env] = time.perf_counter() - start
    return tables, timing


def test_a7_multihead_beats_vanilla(matrix):
    tables, timing = matrix
    parts, ok = [], True
    for env, table in tables.items():
        mh, van = table.mean(env, "multi-head"), table.mean(env, "vanilla")
        ok &= mh > van
        parts.append(f"{env} success multi-head {mh:.3f} vs vanilla {van:.3f} ({timing[env] / 60:.1f} min)")
    passed = record("A7", ok, "; ".join(parts))
    assert passed


def test_a8_time_obs_no_better(matrix):
    tables, _ = matrix
    table = tables["pick-place-lite"]
    mh, tobs = table.mean("pick-place-lite", "multi-head"), table.mean("pick-place-lite", "time-obs")
    passed = record("A8", tobs <= mh, f"pick-place-lite success time-obs {tobs:.3f} vs multi-head {mh:.3f}")
    assert passed


def test_a9_determinism(tmp_path):
    config = RunConfig.for_env("pick-place-lite", "multi-head", ppo={"iterations": 2}, seed=5,
                               out_dir=str(tmp_path / "run"), eval_episodes=3, eval_interval=1)
    snapshots = []
    for _ in range(2):
        run_training(config)
        dump_trajectory(tmp_path / "run" / "checkpoint.ckpt", "pick-place-lite", 9, tmp_path / "run" / "traj.jsonl")
        snapshots.append({name: (tmp_path / "run" / name).read_bytes()
                          for name in ("metrics.csv", "checkpoint.ckpt", "traj.jsonl")})
    same = [name for name in snapshots[0] if snapshots[0][name] == snapshots[1][name]]
    passed = record("A9", len(same) == 3, f"byte-identical on rerun: {', '.join(same)}")
    assert passed


def test_a10_single_head_degeneracy():
    spec = make_spec("push-lite")
    vanilla = build_policy(PolicyConfig("vanilla", spec.obs_dim, spec.action_dim, 1, spec.horizon, seed=1))
    single = build_policy(PolicyConfig("multi-head", spec.obs_dim, spec.action_dim, 1, spec.horizon, seed=2))
    rng = np.random.default_rng(0)
    for pv, pm in zip(vanilla.parameters(), single.parameters()):
        pv.data = rng.normal(size=pv.data.shape) * 0.3
        pm.data = pv.data.copy()

    mismatched = 0
    for i in range(1000):
        obs, t = rng.normal(size=spec.obs_dim), int(rng.integers(0, spec.horizon))
        av, _ = sample_action(policy_forward(vanilla, obs, t), np.random.default_rng(i))
        am, _ = sample_action(policy_forward(single, obs, t), np.random.default_rng(i))
        mismatched += int(not np.array_equal(av, am))

    value = build_value_net(spec.obs_dim, "vanilla", spec.horizon, seed=3)
    buffer = compute_gae(collect_rollouts(vanilla, value, spec, 400, np.random.default_rng(4)), 0.99, 0.95)
    before = [p.data.copy() for p in vanilla.parameters()]
    ppo_update(vanilla, value, buffer, PPOConfig(), np.random.default_rng(5))
    ppo_update(single, build_value_net(spec.obs_dim, "multi-head", spec.horizon, seed=3), buffer, PPOConfig(),
               np.random.default_rng(5))
    deltas_equal = all(
        np.array_equal(pv.data - b, pm.data - b)
        for pv, pm, b in zip(vanilla.parameters(), single.parameters(), before)
    )
    moved = any(not np.array_equal(pv.data, b) for pv, b in zip(vanilla.parameters(), before))
    passed = record("A10", mismatched == 0 and deltas_equal and moved,
                    f"{mismatched}/1000 action mismatches, identical update deltas: {deltas_equal}")
    assert passed
