"""Kinematic 2D manipulation tasks with a fixed horizon.

Arena is the unit square.  The agent is a point gripper starting at
(0.1, 0.1); an object and a goal are placed at random in [0.3, 0.7]^2 at
least 0.2 apart.  Episodes always run for the full horizon.

==================  ====================================  ======  ===========
name                observation                           action  horizon
==================  ====================================  ======  ===========
push-lite           p.x p.y o.x o.y g.x g.y               dx dy   100
pick-place-lite     p.x p.y o.x o.y g.x g.y held          dx dy grip  100
lid-close-lite      same as pick-place-lite               dx dy grip  100
two-phase-probe     1.0                                   a       2
==================  ====================================  ======  ===========
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ArgumentError, UsageError

PUSH = "push-lite"
PICK_PLACE = "pick-place-lite"
LID_CLOSE = "lid-close-lite"
PROBE = "two-phase-probe"
ENV_NAMES = (PUSH, PICK_PLACE, LID_CLOSE, PROBE)

AGENT_START = (0.1, 0.1)
SPAWN_LOW, SPAWN_HIGH = 0.3, 0.7
MIN_GOAL_DISTANCE = 0.2
MAX_MOVE = 0.05

PUSH_RADIUS = 0.06
PUSH_SUCCESS = 0.05
GRASP_RADIUS = 0.05
PLACE_SUCCESS = {PICK_PLACE: 0.07, LID_CLOSE: 0.03}

REWARD_BOUNDS = {
    PUSH: (-1.5 * math.sqrt(2.0), 5.0),
    PICK_PLACE: (-math.sqrt(2.0), 10.5),
    LID_CLOSE: (-math.sqrt(2.0), 10.5),
    PROBE: (-1.0, 1.0),
}


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    action_dim: int
    horizon: int
    action_low: tuple
    action_high: tuple


_SPECS = {
    PUSH: EnvSpec(PUSH, 6, 2, 100, (-MAX_MOVE, -MAX_MOVE), (MAX_MOVE, MAX_MOVE)),
    PICK_PLACE: EnvSpec(PICK_PLACE, 7, 3, 100, (-MAX_MOVE, -MAX_MOVE, -1.0), (MAX_MOVE, MAX_MOVE, 1.0)),
    LID_CLOSE: EnvSpec(LID_CLOSE, 7, 3, 100, (-MAX_MOVE, -MAX_MOVE, -1.0), (MAX_MOVE, MAX_MOVE, 1.0)),
    PROBE: EnvSpec(PROBE, 1, 1, 2, (-1.0,), (1.0,)),
}


def make_spec(name: str) -> EnvSpec:
    try:
        return _SPECS[name]
    except KeyError:
        raise ArgumentError(f"unknown environment {name!r}; expected one of {ENV_NAMES}") from None


@dataclass(frozen=True)
class EnvState:
    spec: EnvSpec
    agent: tuple
    obj: tuple
    goal: tuple
    held: bool = False
    t: int = 0
    rng: np.random.Generator | None = None


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    terminal: bool
    success: bool


def _clamp01(v: float) -> float:
    return min(1.0, max(0.0, v))


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def observe(state: EnvState) -> np.ndarray:
    if state.spec.name == PROBE:
        return np.array([1.0])
    obs = [*state.agent, *state.obj, *state.goal]
    if state.spec.name != PUSH:
        obs.append(1.0 if state.held else 0.0)
    return np.array(obs, dtype=np.float64)


def env_reset(spec: EnvSpec, seed: int):
    """Fresh episode; identical seeds give identical states."""
    rng = np.random.default_rng(seed)
    if spec.name == PROBE:
        state = EnvState(spec, (0.0, 0.0), (0.0, 0.0), (0.0, 0.0), rng=rng)
        return state, observe(state)
    obj = tuple(float(v) for v in rng.uniform(SPAWN_LOW, SPAWN_HIGH, size=2))
    while True:
        goal = tuple(float(v) for v in rng.uniform(SPAWN_LOW, SPAWN_HIGH, size=2))
        if _dist(obj, goal) >= MIN_GOAL_DISTANCE:
            break
    state = EnvState(spec, AGENT_START, obj, goal, False, 0, rng)
    return state, observe(state)


def clip_action(spec: EnvSpec, action) -> np.ndarray:
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (spec.action_dim,):
        raise ArgumentError(f"{spec.name}: action shape {action.shape}, expected ({spec.action_dim},)")
    return np.clip(action, spec.action_low, spec.action_high)


def _move(agent, action):
    return (_clamp01(agent[0] + float(action[0])), _clamp01(agent[1] + float(action[1])))


def _push_step(state: EnvState, action):
    p = _move(state.agent, action)
    o = state.obj
    d = _dist(p, o)
    if d < PUSH_RADIUS:
        if d > 0.0:
            ux, uy = (o[0] - p[0]) / d, (o[1] - p[1]) / d
        else:
            # coincident points: push along the motion direction, if any
            m = math.hypot(action[0], action[1])
            ux, uy = (action[0] / m, action[1] / m) if m > 0.0 else (0.0, 0.0)
        if ux or uy:
            o = (_clamp01(p[0] + PUSH_RADIUS * ux), _clamp01(p[1] + PUSH_RADIUS * uy))
    og = _dist(o, state.goal)
    success = og < PUSH_SUCCESS
    reward = -0.5 * _dist(p, o) - og + (5.0 if success else 0.0)
    return replace(state, agent=p, obj=o, t=state.t + 1), reward, success


def _grasp_step(state: EnvState, action):
    p = _move(state.agent, action)
    o, held = state.obj, state.held
    close = action[2] > 0.0
    if close and not held and _dist(p, o) < GRASP_RADIUS:
        held, o = True, p
    elif close and held:
        o = p
    elif not close and held:
        held = False
    og = _dist(o, state.goal)
    success = (not held) and og < PLACE_SUCCESS[state.spec.name]
    h = 1.0 if held else 0.0
    reward = -(1.0 - h) * _dist(p, o) - h * og + 0.5 * h + (10.0 if success else 0.0)
    return replace(state, agent=p, obj=o, held=held, t=state.t + 1), reward, success


def _probe_step(state: EnvState, action):
    a = float(action[0])
    reward = a if state.t == 0 else -a
    return replace(state, t=state.t + 1), reward, False


_DYNAMICS = {PUSH: _push_step, PICK_PLACE: _grasp_step, LID_CLOSE: _grasp_step, PROBE: _probe_step}


def env_step(state: EnvState, action):
    """Clip, apply one step of dynamics, and score the resulting state."""
    if state.t >= state.spec.horizon:
        raise UsageError(f"{state.spec.name}: episode already ended at t={state.t}")
    action = clip_action(state.spec, action)
    new_state, reward, success = _DYNAMICS[state.spec.name](state, action)
    result = StepResult(observe(new_state), float(reward), new_state.t == state.spec.horizon, bool(success))
    return new_state, result


def optimal_return(spec: EnvSpec) -> float | None:
    """Known optimal undiscounted return, or ``None`` where none is known."""
    if spec.name == PROBE:
        return 2.0
    return None


TRAJECTORY_FIELDS = ("t", "head_index", "p", "o", "g", "held", "action", "reward", "success")


def trajectory_record(t: int, head_index: int, state: EnvState, action, reward: float, success: bool) -> str:
    """One JSON line describing step ``t``; positions are post-step."""
    record = {
        "t": int(t),
        "head_index": int(head_index),
        "p": list(state.agent),
        "o": list(state.obj),
        "g": list(state.goal),
        "held": bool(state.held),
        "action": [float(a) for a in action],
        "reward": float(reward),
        "success": bool(success),
    }
    return json.dumps(record)
