"""Noise-injected policies and the self-supervised noisy-trajectory dataset.

A noisy policy mixes its base policy with the uniform action distribution::

    pi_eta(a|s) = eta * U(a) + (1 - eta) * pi(a|s)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .envs import Environment, Trajectory, rollout_batch
from .nn import check_finite


class NoisyPolicy:
    """Uniform-noise mixture around ``base``.

    ``eta`` may be a scalar or an array with one level per batch row, which
    lets a single lockstep rollout carry several noise levels.
    """

    def __init__(self, base, eta, env: Environment):
        eta_arr = np.asarray(eta, dtype=np.float64)
        if np.any((eta_arr < 0) | (eta_arr > 1)):
            raise ValueError(f"noise level must lie in [0, 1], got {eta!r}")
        self.base = base
        self.eta = eta
        self.env = env

    def _etas(self, n):
        return np.broadcast_to(np.asarray(self.eta, dtype=np.float64), (n,))

    def log_prob(self, states, actions, eta=None):
        """Exact log-density of the mixture; ``eta`` overrides ``self.eta`` per row."""
        actions = np.asarray(actions)
        n = len(actions)
        etas = self._etas(n) if eta is None else np.broadcast_to(np.asarray(eta, float), (n,))
        log_base = self.base.log_prob(states, actions)
        with np.errstate(divide="ignore"):
            a = np.log(etas) + self.env.uniform_log_density(actions)
            b = np.log1p(-etas) + log_base
        return np.logaddexp(a, b)

    def probs(self, states):
        """Discrete only: full action distribution per state."""
        etas = self._etas(len(np.asarray(states).reshape(-1, self.env.state_dim)))[:, None]
        return etas / self.env.n_actions + (1 - etas) * self.base.probs(states)

    def sample(self, states, rng: np.random.Generator, noise_rng: Optional[np.random.Generator] = None):
        """Draw the base action from ``rng`` and the noise from ``noise_rng``.

        With every level at zero no noise draws are made, so the action
        stream equals the base policy's stream under the same ``rng``.
        """
        base_actions = self.base.sample(states, rng)
        n = len(base_actions)
        etas = self._etas(n)
        if not np.any(etas > 0):
            return base_actions
        noise_rng = rng if noise_rng is None else noise_rng
        use_uniform = noise_rng.random(n) < etas
        uniform = self.env.uniform_actions(n, noise_rng)
        if base_actions.ndim == 1:
            return np.where(use_uniform, uniform, base_actions)
        return np.where(use_uniform[:, None], uniform, base_actions)


def sample_noisy_action(noisy: NoisyPolicy, state, rng):
    return noisy.sample(np.asarray(state)[None], rng)[0]


@dataclass(eq=False)
class NoisyTrajectory:
    eta: float
    trajectory: Trajectory
    initial_rewards: np.ndarray

    def __post_init__(self):
        self.initial_rewards = np.asarray(self.initial_rewards, dtype=np.float64)
        if len(self.initial_rewards) != len(self.trajectory):
            raise ValueError("need exactly one initial reward per action")

    @property
    def states(self):
        return self.trajectory.states

    @property
    def actions(self):
        return self.trajectory.actions

    def __len__(self):
        return len(self.trajectory)

    def to_dict(self):
        return {
            "eta": float(self.eta),
            **self.trajectory.to_dict(),
            "initial_rewards": self.initial_rewards.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["eta"], Trajectory.from_dict(d), d["initial_rewards"])


@dataclass(eq=False)
class NoisyDataset:
    trajectories: list
    noise_grid: list
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = set(float(e) for e in self.noise_grid)
        for t in self.trajectories:
            if float(t.eta) not in grid:
                raise ValueError(f"trajectory noise level {t.eta} is not on the noise grid")

    def __len__(self):
        return len(self.trajectories)

    @property
    def etas(self):
        return np.array([t.eta for t in self.trajectories])

    def initial_returns(self):
        """Cumulative initial reward per trajectory."""
        return np.array([t.initial_rewards.sum() for t in self.trajectories])

    def to_dict(self):
        return {
            "provenance": self.provenance,
            "noise_grid": [float(e) for e in self.noise_grid],
            "trajectories": [t.to_dict() for t in self.trajectories],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([NoisyTrajectory.from_dict(t) for t in d["trajectories"]],
                   list(d["noise_grid"]), d.get("provenance", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))


def default_noise_grid(levels=20) -> list:
    return [float(v) for v in np.linspace(0.0, 1.0, levels)]


def synthesize_dataset(reward, policy, env: Environment, noise_grid: Sequence[float],
                       episodes_per_level: int, rng: np.random.Generator,
                       provenance: Optional[dict] = None) -> NoisyDataset:
    """Roll out ``policy`` at every noise level and score each step with ``reward``.

    All levels share the same two random streams (base-policy draws and
    noise draws), so episode ``e`` at a higher level differs from episode
    ``e`` at a lower level only where the extra noise fires.
    """
    if episodes_per_level < 1:
        raise ValueError("episodes_per_level must be >= 1")
    grid = [float(e) for e in noise_grid]
    if any(e < 0 or e > 1 for e in grid):
        raise ValueError("noise levels must lie in [0, 1]")
    base_seed, noise_seed = (int(s) for s in rng.integers(2**63 - 1, size=2))
    out = []
    for eta in grid:
        noisy = NoisyPolicy(policy, eta, env)
        noise_rng = np.random.default_rng(noise_seed)
        trajs = rollout_batch(
            env,
            lambda s, r: noisy.sample(s, r, noise_rng),
            episodes_per_level,
            np.random.default_rng(base_seed),
        )
        for t in trajs:
            r = np.asarray(reward(t.step_states(), t.actions), dtype=np.float64)
            check_finite(r, "initial reward")
            out.append(NoisyTrajectory(eta, t, r))
    return NoisyDataset(out, grid, dict(provenance or {}))
