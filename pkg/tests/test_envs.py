import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chronoskill.envs import (
    ENV_NAMES,
    REWARD_BOUNDS,
    TRAJECTORY_FIELDS,
    EnvState,
    env_reset,
    env_step,
    make_spec,
    optimal_return,
    trajectory_record,
)
from chronoskill.errors import ArgumentError, UsageError

MANIPULATION = ["push-lite", "pick-place-lite", "lid-close-lite"]


def dist(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def rollout(name, seed, actions):
    state, obs = env_reset(make_spec(name), seed)
    out = []
    for a in actions:
        state, res = env_step(state, a)
        out.append((state, res))
    return out


class TestReset:
    @pytest.mark.parametrize("name", ENV_NAMES)
    def test_deterministic(self, name):
        _, a = env_reset(make_spec(name), 123)
        _, b = env_reset(make_spec(name), 123)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("name", MANIPULATION)
    def test_goal_separation_and_layout(self, name):
        spec = make_spec(name)
        for seed in range(1000):
            state, obs = env_reset(spec, seed)
            assert dist(state.obj, state.goal) >= 0.2
            assert state.agent == (0.1, 0.1) and state.t == 0 and not state.held
            assert all(0.3 <= v <= 0.7 for v in (*state.obj, *state.goal))
            assert obs.shape == (spec.obs_dim,)

    def test_push_observation_layout(self):
        state, obs = env_reset(make_spec("push-lite"), 5)
        assert list(obs) == [*state.agent, *state.obj, *state.goal]
        assert make_spec("push-lite").obs_dim == 6

    def test_grasp_observation_layout(self):
        state, obs = env_reset(make_spec("pick-place-lite"), 5)
        assert list(obs) == [*state.agent, *state.obj, *state.goal, 0.0]

    def test_unknown_env(self):
        with pytest.raises(ArgumentError):
            make_spec("assembly-v2")


class TestStep:
    def test_push_without_contact_leaves_object(self):
        spec = make_spec("push-lite")
        state, _ = env_reset(spec, 0)
        for a in ([0.05, 0.05], [-0.05, 0.0], [0.0, 0.05]):
            new, _ = env_step(state, a)
            assert new.obj == state.obj

    def test_push_contact_moves_object_to_contact_radius(self):
        spec = make_spec("push-lite")
        state = EnvState(spec, (0.45, 0.5), (0.5, 0.5), (0.9, 0.9))
        new, _ = env_step(state, [0.02, 0.0])
        assert new.agent == pytest.approx((0.47, 0.5))
        assert new.obj == pytest.approx((0.53, 0.5))

    def test_grasp_rule(self):
        spec = make_spec("pick-place-lite")
        state = EnvState(spec, (0.5, 0.5), (0.53, 0.5), (0.1, 0.9))
        new, res = env_step(state, [0.0, 0.0, 1.0])
        assert new.held and new.obj == new.agent
        assert res.observation[-1] == 1.0
        moved, _ = env_step(new, [0.03, -0.02, 0.5])
        assert moved.held and moved.obj == moved.agent == pytest.approx((0.53, 0.48))
        released, _ = env_step(moved, [0.04, 0.0, -1.0])
        assert not released.held and released.obj == moved.obj

    def test_grasp_requires_proximity(self):
        spec = make_spec("pick-place-lite")
        state = EnvState(spec, (0.5, 0.5), (0.56, 0.5), (0.1, 0.9))
        new, _ = env_step(state, [0.0, 0.0, 1.0])
        assert not new.held and new.obj == state.obj

    @pytest.mark.parametrize("name", MANIPULATION)
    def test_zero_action(self, name):
        spec = make_spec(name)
        state, _ = env_reset(spec, 3)
        new, res = env_step(state, np.zeros(spec.action_dim))
        assert (new.agent, new.obj, new.goal, new.held) == (state.agent, state.obj, state.goal, state.held)
        assert new.t == 1
        pa, og = dist(state.agent, state.obj), dist(state.obj, state.goal)
        expected = -0.5 * pa - og if name == "push-lite" else -pa
        assert res.reward == pytest.approx(expected, abs=1e-15)

    def test_action_clipped(self):
        spec = make_spec("push-lite")
        state, _ = env_reset(spec, 0)
        new, _ = env_step(state, [10.0, -10.0])
        assert new.agent == pytest.approx((0.15, 0.05))

    def test_pick_place_success_and_reward(self):
        spec = make_spec("pick-place-lite")
        state = EnvState(spec, (0.5, 0.5), (0.5, 0.5), (0.52, 0.5), held=True)
        new, res = env_step(state, [0.0, 0.0, -1.0])
        assert res.success and not new.held
        assert res.reward == pytest.approx(10.0)

    def test_lid_close_tighter_tolerance(self):
        for name, expected in (("pick-place-lite", True), ("lid-close-lite", False)):
            spec = make_spec(name)
            state = EnvState(spec, (0.5, 0.5), (0.5, 0.5), (0.55, 0.5), held=True)
            _, res = env_step(state, [0.0, 0.0, -1.0])
            assert res.success is expected

    def test_terminal_only_at_horizon(self):
        spec = make_spec("push-lite")
        results = rollout("push-lite", 1, [np.zeros(2)] * spec.horizon)
        assert [r.terminal for _, r in results] == [False] * (spec.horizon - 1) + [True]
        with pytest.raises(UsageError):
            env_step(results[-1][0], np.zeros(2))

    def test_wrong_action_length(self):
        state, _ = env_reset(make_spec("push-lite"), 0)
        with pytest.raises(ArgumentError):
            env_step(state, np.zeros(3))


class TestProbe:
    def test_optimal_return(self):
        assert optimal_return(make_spec("two-phase-probe")) == 2.0
        assert optimal_return(make_spec("push-lite")) is None

    def test_best_schedule(self):
        results = rollout("two-phase-probe", 0, [[1.0], [-1.0]])
        assert sum(r.reward for _, r in results) == 2.0
        assert results[-1][1].terminal

    @pytest.mark.parametrize("a", [-1.0, -0.3, 0.0, 0.7, 1.0, 5.0])
    def test_constant_policy_cancels(self, a):
        results = rollout("two-phase-probe", 0, [[a], [a]])
        assert sum(r.reward for _, r in results) == 0.0

    def test_constant_observation(self):
        state, obs = env_reset(make_spec("two-phase-probe"), 9)
        _, res = env_step(state, [0.3])
        assert list(obs) == list(res.observation) == [1.0]


action_sequences = st.lists(
    st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=100
)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(MANIPULATION), st.integers(0, 2**32), action_sequences)
def test_containment_bounds_and_grasp(name, seed, actions):
    spec = make_spec(name)
    state, _ = env_reset(spec, seed)
    low, high = REWARD_BOUNDS[name]
    for a in actions:
        a = np.array(a[: spec.action_dim]) * 0.1 if name == "push-lite" else np.array(a)
        prev = state
        state, res = env_step(state, a)
        assert all(0.0 <= v <= 1.0 for v in (*state.agent, *state.obj, *state.goal))
        assert low <= res.reward <= high
        if state.held:
            assert dist(state.agent, state.obj) <= 1e-9
        if prev.held and a[2] > 0:
            assert state.held and state.obj == state.agent


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(ENV_NAMES), st.integers(0, 2**32), st.integers(0, 2**32))
def test_replay_is_bitwise(name, env_seed, action_seed):
    spec = make_spec(name)
    actions = np.random.default_rng(action_seed).uniform(-1, 1, size=(spec.horizon, spec.action_dim))
    a = [r.reward for _, r in rollout(name, env_seed, actions)]
    b = [r.reward for _, r in rollout(name, env_seed, actions)]
    assert np.array_equal(a, b)


def test_trajectory_record_field_order():
    state, _ = env_reset(make_spec("pick-place-lite"), 0)
    line = trajectory_record(3, 1, state, [0.1, 0.0, -1.0], -0.5, False)
    record = json.loads(line)
    assert tuple(record) == TRAJECTORY_FIELDS
    assert record["p"] == [0.1, 0.1] and record["head_index"] == 1
