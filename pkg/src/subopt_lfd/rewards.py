"""Learned per-step reward functions."""

from __future__ import annotations

import numpy as np

from .envs import Environment, Trajectory
from .nn import Mlp


class RewardModel:
    """Scalar MLP over ``state (+) action`` features, or state features only.

    Calling the model on aligned ``states``/``actions`` arrays gives one reward
    per row.  ``state_only`` models ignore actions (D-REX's ``R(s)``).
    ``offset`` is a fixed constant added to every output; it is not a
    trainable parameter, so weight decay pulls rewards toward it.
    """

    def __init__(self, env: Environment, mlp: Mlp, state_only=False, kind="reward",
                 provenance=None, offset=0.0):
        expected = env.reward_state_feature_dim + (0 if state_only else env.reward_action_feature_dim)
        if mlp.n_inputs != expected or mlp.n_outputs != 1:
            raise ValueError(f"reward network must map {expected} features to 1 output")
        self.env = env
        self.mlp = mlp
        self.state_only = state_only
        self.kind = kind
        self.provenance = dict(provenance or {})
        self.offset = float(offset)

    @classmethod
    def initialize(cls, env, rng, hidden=(64, 64), state_only=False, kind="reward"):
        n_in = env.reward_state_feature_dim + (0 if state_only else env.reward_action_feature_dim)
        return cls(env, Mlp.initialize([n_in, *hidden, 1], rng), state_only, kind)

    @property
    def params(self):
        return self.mlp.params

    @params.setter
    def params(self, value):
        self.mlp.params = np.asarray(value, dtype=np.float64)

    def inputs(self, states, actions=None):
        if self.state_only:
            return self.env.reward_state_features(states)
        return self.env.reward_features(states, actions)

    def __call__(self, states, actions=None):
        if actions is not None and len(np.asarray(actions)) == 0:
            return np.zeros(0)
        return self.mlp.forward(self.inputs(states, actions))[:, 0] + self.offset

    def forward_cache(self, states, actions=None):
        out, cache = self.mlp.forward_cache(self.inputs(states, actions))
        return out[:, 0] + self.offset, cache

    def backward(self, cache, grad_out):
        return self.mlp.backward(cache, np.asarray(grad_out, dtype=np.float64)[:, None])

    def trajectory_return(self, traj: Trajectory) -> float:
        return float(np.sum(self(traj.step_states(), traj.actions)))

    def returns(self, trajectories) -> np.ndarray:
        """Per-trajectory sums, evaluated in one batched forward pass."""
        trajectories = list(trajectories)
        if not trajectories:
            return np.zeros(0)
        states = np.concatenate([t.step_states() for t in trajectories])
        actions = np.concatenate([t.actions for t in trajectories])
        r = self(states, actions)
        bounds = np.cumsum([0] + [len(t) for t in trajectories])
        return np.add.reduceat(np.append(r, 0.0), bounds[:-1]) * (np.diff(bounds) > 0)

    def shifted_to_max(self, trajectories) -> "RewardModel":
        """Copy whose largest reward over the steps of ``trajectories`` is zero.

        Used before policy training on a learned reward.  Ending an episode
        early forfeits the remaining per-step rewards, so a learned reward that
        is positive somewhere can make loops worth more than finishing.  After
        the shift no visited step beats termination; for fixed-horizon tasks
        a constant shift leaves the optimal policy unchanged.
        """
        trajectories = list(trajectories)
        states = np.concatenate([t.step_states() for t in trajectories])
        actions = np.concatenate([t.actions for t in trajectories])
        out = self.copy()
        out.offset = self.offset - float(np.max(self(states, actions)))
        out.provenance = {**self.provenance, "shifted_to_max": True}
        return out

    def copy(self):
        return RewardModel(self.env, self.mlp.copy(), self.state_only, self.kind, self.provenance,
                           self.offset)

    def to_dict(self):
        return {
            "kind": self.kind,
            "state_only": self.state_only,
            "offset": self.offset,
            "provenance": self.provenance,
            **self.mlp.to_dict(),
        }

    @classmethod
    def from_dict(cls, d, env):
        return cls(env, Mlp.from_dict(d), d.get("state_only", False), d.get("kind", "reward"),
                   d.get("provenance"), d.get("offset", 0.0))
