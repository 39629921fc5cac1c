"""Environments, trajectories and rollouts.

Two desk-scale MDPs are provided:

``GridNav``
    N x N deterministic grid, four moves, start at (0, 0), goal at the far
    corner.  Episodes end at the goal or after ``horizon`` steps.
``PointReach``
    2-D point mass with damped linear dynamics and bounded acceleration,
    fixed horizon.

Ground-truth rewards are only reachable through :class:`GroundTruthEvaluator`.
Learners receive an environment object and never call ``evaluator()``; the
evaluation and test code are the only callers by convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .exceptions import DimensionError, InvalidActionError

DISCRETE = "discrete"
CONTINUOUS = "continuous"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``s_0 .. s_L`` and the ``L`` actions taken between them."""

    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states)
        actions = np.asarray(self.actions)
        if states.ndim == 1:
            states = states[:, None]
        if len(states) != len(actions) + 1:
            raise DimensionError(
                f"{len(states)} states for {len(actions)} actions; need one more state"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)

    def __len__(self):
        return len(self.actions)

    @property
    def length(self) -> int:
        return len(self.actions)

    def step_states(self):
        """States at which each action was taken, i.e. ``s_0 .. s_{L-1}``."""
        return self.states[:-1]

    def slice(self, start: int, stop: int) -> "Trajectory":
        """Sub-trajectory over actions ``start .. stop-1`` (0-based, half open)."""
        return Trajectory(self.states[start : stop + 1], self.actions[start:stop])

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.states.shape == other.states.shape
            and self.actions.shape == other.actions.shape
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
        )

    def to_dict(self) -> dict:
        return {"states": _to_json_array(self.states), "actions": _to_json_array(self.actions)}

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(_from_json_array(d["states"]), _from_json_array(d["actions"]))


def _to_json_array(a: np.ndarray):
    if np.issubdtype(a.dtype, np.integer):
        return a.astype(int).tolist()
    return np.asarray(a, dtype=np.float64).tolist()


def _from_json_array(x):
    a = np.asarray(x)
    if a.size == 0:
        return a.astype(np.float64)
    if np.issubdtype(a.dtype, np.integer):
        return a.astype(np.int64)
    return a.astype(np.float64)


def dump_trajectories(trajectories: Sequence[Trajectory]) -> str:
    return json.dumps([t.to_dict() for t in trajectories])


def load_trajectories(text: str) -> list[Trajectory]:
    return [Trajectory.from_dict(d) for d in json.loads(text)]


class Environment:
    """Common surface of the built-in MDPs.

    Subclasses set ``state_dim``, ``action_dim``, ``action_kind``, ``horizon``
    and ``discount``, and implement the batched ``_reset``/``_step``/``_reward``
    hooks.  Instances are immutable.
    """

    name: str
    state_dim: int
    action_dim: int
    action_kind: str
    horizon: int
    discount: float
    n_actions: int | None = None
    action_low: np.ndarray | None = None
    action_high: np.ndarray | None = None

    def _validate_spec(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        if self.action_kind == CONTINUOUS:
            low, high = np.asarray(self.action_low), np.asarray(self.action_high)
            if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high)) and np.all(low < high)):
                raise ValueError("continuous action bounds must be finite with low < high")

    # -- action space -------------------------------------------------
    @property
    def is_discrete(self) -> bool:
        return self.action_kind == DISCRETE

    def action_volume(self) -> float:
        """Base measure of the uniform action distribution (count or box volume)."""
        if self.is_discrete:
            return float(self.n_actions)
        return float(np.prod(self.action_high - self.action_low))

    def uniform_actions(self, n: int, rng: np.random.Generator):
        if self.is_discrete:
            return rng.integers(0, self.n_actions, size=n)
        return rng.uniform(self.action_low, self.action_high, size=(n, self.action_dim))

    def uniform_log_density(self, actions):
        """``log U(a)``; ``-inf`` for continuous actions outside the box."""
        actions = np.asarray(actions)
        if self.is_discrete:
            return np.full(len(actions), -np.log(self.n_actions))
        inside = np.all((actions >= self.action_low) & (actions <= self.action_high), axis=1)
        return np.where(inside, -np.log(self.action_volume()), -np.inf)

    def check_actions(self, actions):
        actions = np.asarray(actions)
        if self.is_discrete:
            if not np.issubdtype(actions.dtype, np.integer) or np.any(
                (actions < 0) | (actions >= self.n_actions)
            ):
                raise InvalidActionError(
                    f"discrete actions must be integers in [0, {self.n_actions}), got {actions!r}"
                )
        elif actions.ndim != 2 or actions.shape[1] != self.action_dim or not np.all(
            np.isfinite(actions)
        ):
            raise InvalidActionError(f"expected finite actions of width {self.action_dim}")
        return actions

    # -- features for learned functions --------------------------------
    def state_features(self, states) -> np.ndarray:
        raise NotImplementedError

    def action_features(self, actions) -> np.ndarray:
        raise NotImplementedError

    @property
    def state_feature_dim(self) -> int:
        raise NotImplementedError

    @property
    def action_feature_dim(self) -> int:
        raise NotImplementedError

    def features(self, states, actions) -> np.ndarray:
        return np.hstack([self.state_features(states), self.action_features(actions)])

    # Learned rewards may read a narrower view than the policy; by default
    # they see the same features.
    def reward_state_features(self, states) -> np.ndarray:
        return self.state_features(states)

    def reward_action_features(self, actions) -> np.ndarray:
        return self.action_features(actions)

    @property
    def reward_state_feature_dim(self) -> int:
        return self.state_feature_dim

    @property
    def reward_action_feature_dim(self) -> int:
        return self.action_feature_dim

    def reward_features(self, states, actions) -> np.ndarray:
        return np.hstack([self.reward_state_features(states), self.reward_action_features(actions)])

    # -- dynamics ----------------------------------------------------------
    def reset(self, rng: np.random.Generator):
        return self.reset_batch(1, rng)[0]

    def reset_batch(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._reset(n, rng)

    def step(self, state, action):
        """One transition; returns ``(next_state, done)``."""
        states = np.asarray(state)[None]
        actions = self.check_actions(np.asarray(action)[None])
        nxt, done = self._step(states, actions)
        return nxt[0], bool(done[0])

    def step_batch(self, states, actions):
        return self._step(np.asarray(states), self.check_actions(actions))

    def evaluator(self) -> "GroundTruthEvaluator":
        return GroundTruthEvaluator(self)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class GridNav(Environment):
    """Deterministic grid; actions 0..3 move +x, -x, +y, -y (blocked at walls)."""

    size: int = 8
    horizon: int = 64
    discount: float = 0.99
    step_reward: float = -1.0
    goal_reward: float = 20.0

    name = "gridnav"
    action_kind = DISCRETE
    n_actions = 4
    action_dim = 1
    state_dim = 2
    MOVES = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("grid size must be >= 2")
        self._validate_spec()

    @property
    def start(self):
        return np.array([0, 0])

    @property
    def goal(self):
        return np.array([self.size - 1, self.size - 1])

    @property
    def n_states(self) -> int:
        return self.size * self.size

    def state_index(self, states) -> np.ndarray:
        states = np.asarray(states).reshape(-1, 2).astype(np.int64)
        return states[:, 0] + self.size * states[:, 1]

    def _reset(self, n, rng):
        return np.tile(self.start, (n, 1))

    def _step(self, states, actions):
        nxt = np.clip(states + self.MOVES[actions], 0, self.size - 1)
        return nxt, np.all(nxt == self.goal, axis=1)

    def _reward(self, states, actions):
        nxt, at_goal = self._step(np.asarray(states).reshape(-1, 2), actions)
        return self.step_reward + self.goal_reward * at_goal

    def state_features(self, states):
        """One-hot cell encoding; unvisited cells share only the network bias."""
        return np.eye(self.n_states)[self.state_index(states)]

    def action_features(self, actions):
        return np.eye(self.n_actions)[np.asarray(actions, dtype=int)]

    @property
    def state_feature_dim(self):
        return self.n_states

    @property
    def action_feature_dim(self):
        return self.n_actions

    def shortest_path_length(self) -> int:
        """Breadth-first search from the start to the goal."""
        from collections import deque

        start, goal = tuple(self.start), tuple(self.goal)
        dist = {start: 0}
        queue = deque([start])
        while queue:
            s = queue.popleft()
            if s == goal:
                return dist[s]
            for a in range(self.n_actions):
                t = tuple(int(v) for v in np.clip(np.array(s) + self.MOVES[a], 0, self.size - 1))
                if t not in dist:
                    dist[t] = dist[s] + 1
                    queue.append(t)
        raise RuntimeError("goal unreachable")

    def optimal_return(self) -> float:
        n = self.shortest_path_length()
        return n * self.step_reward + self.goal_reward

    def to_dict(self):
        return {"id": self.name, "size": self.size, "horizon": self.horizon, "discount": self.discount}


@dataclass(frozen=True, eq=False)
class PointReach(Environment):
    """Point mass: ``v' = damping*v + dt*clip(a)``, ``p' = p + dt*v'``.

    Positions live in the square ``[-arena, arena]^2``; a step that would
    leave it stops at the wall and zeroes that velocity component.  Inside
    the arena the dynamics are linear.  ``arena=None`` removes the walls.

    ``reward_inputs="position"`` restricts learned rewards to the position;
    ``"full"`` gives them position, velocity and action.  Policies always
    observe the full state.
    """

    horizon: int = 100
    discount: float = 0.99
    damping: float = 0.95
    dt: float = 0.2
    target: tuple = (0.5, 0.5)
    start_low: tuple = (-1.5, -1.5)
    start_high: tuple = (1.5, 1.5)
    action_cost: float = 0.01
    arena: Optional[float] = 2.0
    reward_inputs: str = "position"
    action_low: np.ndarray = field(default_factory=lambda: np.array([-1.0, -1.0]))
    action_high: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]))

    name = "pointreach"
    action_kind = CONTINUOUS
    action_dim = 2
    state_dim = 4

    def __post_init__(self):
        self._validate_spec()
        if self.arena is not None:
            corners = np.abs(np.r_[self.start_low, self.start_high, self.target])
            if not self.arena > 0 or np.any(corners > self.arena):
                raise ValueError("start box and target must lie inside the arena")
        if self.reward_inputs not in ("position", "full"):
            raise ValueError("reward_inputs must be 'position' or 'full'")

    def _reset(self, n, rng):
        pos = rng.uniform(self.start_low, self.start_high, size=(n, 2))
        return np.hstack([pos, np.zeros((n, 2))])

    def _step(self, states, actions):
        states = np.asarray(states, dtype=np.float64).reshape(-1, 4)
        a = np.clip(actions, self.action_low, self.action_high)
        vel = self.damping * states[:, 2:] + self.dt * a
        pos = states[:, :2] + self.dt * vel
        if self.arena is not None:
            hit = np.abs(pos) > self.arena
            pos = np.clip(pos, -self.arena, self.arena)
            vel = np.where(hit, 0.0, vel)
        return np.hstack([pos, vel]), np.zeros(len(states), dtype=bool)

    def _reward(self, states, actions):
        states = np.asarray(states, dtype=np.float64).reshape(-1, 4)
        a = np.clip(np.asarray(actions, dtype=np.float64), self.action_low, self.action_high)
        dist = np.linalg.norm(states[:, :2] - np.asarray(self.target), axis=1)
        return -dist - self.action_cost * np.sum(a * a, axis=1)

    def state_features(self, states):
        return np.asarray(states, dtype=np.float64).reshape(-1, 4)

    def action_features(self, actions):
        a = np.asarray(actions, dtype=np.float64).reshape(-1, 2)
        return np.clip(a, self.action_low, self.action_high)

    @property
    def state_feature_dim(self):
        return 4

    @property
    def action_feature_dim(self):
        return 2

    def reward_state_features(self, states):
        feats = self.state_features(states)
        return feats[:, :2] if self.reward_inputs == "position" else feats

    def reward_action_features(self, actions):
        if self.reward_inputs == "position":
            return np.zeros((len(np.asarray(actions).reshape(-1, 2)), 0))
        return self.action_features(actions)

    @property
    def reward_state_feature_dim(self):
        return 2 if self.reward_inputs == "position" else 4

    @property
    def reward_action_feature_dim(self):
        return 0 if self.reward_inputs == "position" else 2

    def to_dict(self):
        return {"id": self.name, "horizon": self.horizon, "discount": self.discount,
                "arena": self.arena, "start_low": list(self.start_low),
                "start_high": list(self.start_high), "reward_inputs": self.reward_inputs}


ENVIRONMENTS = {"gridnav": GridNav, "pointreach": PointReach}


def make_env(env_id: str, **kwargs) -> Environment:
    try:
        return ENVIRONMENTS[env_id](**kwargs)
    except KeyError:
        raise ValueError(f"unknown environment {env_id!r}; choose from {sorted(ENVIRONMENTS)}")


def env_from_dict(d: dict) -> Environment:
    """Rebuild an environment from its ``to_dict`` form."""
    spec = dict(d)
    if "id" not in spec:
        raise ValueError("environment description lacks an 'id'")
    env_id = spec.pop("id")
    if env_id not in ENVIRONMENTS:
        raise ValueError(f"unknown environment {env_id!r}; choose from {sorted(ENVIRONMENTS)}")
    names = {f.name for f in fields(ENVIRONMENTS[env_id]) if f.init}
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in spec.items() if k in names}
    return make_env(env_id, **kwargs)


class GroundTruthEvaluator:
    """Holds the hidden per-step reward of an environment."""

    def __init__(self, env: Environment):
        self.env = env

    def reward_fn(self, states, actions) -> np.ndarray:
        actions = np.asarray(actions)
        if len(actions) == 0:
            return np.zeros(0)
        return np.asarray(self.env._reward(states, actions), dtype=np.float64)

    __call__ = reward_fn

    def trajectory_return(self, traj: Trajectory) -> float:
        _check_traj(self.env, traj)
        return float(np.sum(self.reward_fn(traj.step_states(), traj.actions)))


def _check_traj(env, traj):
    if traj.states.shape[1] != env.state_dim:
        raise DimensionError(
            f"trajectory states have width {traj.states.shape[1]}, env expects {env.state_dim}"
        )
    if not env.is_discrete and len(traj) and traj.actions.shape[1] != env.action_dim:
        raise DimensionError("trajectory action width does not match the environment")


# -- environment-level operations ------------------------------------------------


def reset(env: Environment, rng: np.random.Generator):
    return env.reset(rng)


def step(env: Environment, state, action):
    return env.step(state, action)


def ground_truth_return(evaluator: GroundTruthEvaluator, trajectory: Trajectory) -> float:
    """Undiscounted sum of per-step ground-truth rewards."""
    return evaluator.trajectory_return(trajectory)


def rollout_batch(env: Environment, sampler, n: int, rng: np.random.Generator) -> list[Trajectory]:
    """Roll out ``n`` episodes in lockstep.

    ``sampler(states, rng)`` returns one action per row of ``states``.  It is
    called on every row at every step, finished episodes included, so the
    random stream consumed is a function of ``(n, horizon)`` alone.  That
    keeps streams aligned between runs that share a seed.
    """
    states = env.reset_batch(n, rng)
    all_states = [states]
    all_actions = []
    done = np.zeros(n, dtype=bool)
    lengths = np.full(n, env.horizon)
    for t in range(env.horizon):
        actions = env.check_actions(sampler(states, rng))
        nxt, d = env.step_batch(states, actions)
        nxt = np.where(done[:, None], states, nxt)
        all_actions.append(actions)
        all_states.append(nxt)
        newly = d & ~done
        lengths[newly] = t + 1
        done |= d
        states = nxt
        if done.all():
            break
    S = np.stack(all_states, axis=1)
    A = np.stack(all_actions, axis=1)
    return [Trajectory(S[i, : lengths[i] + 1], A[i, : lengths[i]]) for i in range(n)]


def rollout(env: Environment, policy, rng: np.random.Generator) -> Trajectory:
    """Single episode under ``policy`` (anything with ``sample(states, rng)``)."""
    return rollout_batch(env, policy.sample, 1, rng)[0]
