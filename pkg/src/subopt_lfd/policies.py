"""Stochastic policies, behavioral cloning and an entropy-regularized REINFORCE trainer."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .envs import Environment, GridNav, rollout_batch
from .exceptions import DimensionError
from .nn import Adam, Mlp, check_finite, optimize_step

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
MIN_STD = 0.01


class Policy:
    """Interface shared by the categorical and Gaussian policies."""

    kind: str

    def log_prob(self, states, actions) -> np.ndarray:
        raise NotImplementedError

    def sample(self, states, rng: np.random.Generator):
        raise NotImplementedError

    def entropy(self, states) -> np.ndarray:
        raise NotImplementedError

    def grad_log_prob(self, states, actions, weights) -> np.ndarray:
        """Gradient of ``sum_i weights[i] * log pi(a_i | s_i)`` w.r.t. ``params``."""
        raise NotImplementedError

    def grad_entropy(self, states, weights) -> np.ndarray:
        """Gradient of ``sum_i weights[i] * H(pi(. | s_i))`` w.r.t. ``params``."""
        raise NotImplementedError


class CategoricalPolicy(Policy):
    """Softmax over logits ``mlp(features(s))``.

    With ``tabular=True`` the features are a one-hot encoding of the grid
    cell and the network has no hidden layer, which makes the logits a
    lookup table (plus a shared bias).
    """

    kind = "tabular-softmax"

    def __init__(self, env: GridNav, mlp: Mlp):
        if mlp.n_outputs != env.n_actions:
            raise DimensionError("policy output width must equal the action count")
        self.env = env
        self.mlp = mlp

    @classmethod
    def tabular(cls, env: GridNav, logits=None):
        mlp = Mlp([env.n_states, env.n_actions])
        if logits is not None:
            (W, _), = mlp.layers()
            W[:] = np.broadcast_to(np.asarray(logits, dtype=np.float64), W.shape)
        return cls(env, mlp)

    @property
    def params(self):
        return self.mlp.params

    @params.setter
    def params(self, value):
        self.mlp.params = np.asarray(value, dtype=np.float64)

    def _inputs(self, states):
        idx = self.env.state_index(states)
        return np.eye(self.env.n_states)[idx]

    def logits(self, states):
        return self.mlp.forward(self._inputs(states))

    def _log_softmax(self, z):
        z = z - z.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def log_probs_all(self, states):
        return self._log_softmax(self.logits(states))

    def probs(self, states):
        return np.exp(self.log_probs_all(states))

    def log_prob(self, states, actions):
        lp = self.log_probs_all(states)
        return lp[np.arange(len(lp)), np.asarray(actions, dtype=int)]

    def sample(self, states, rng):
        p = self.probs(states)
        u = rng.random(len(p))
        a = (u[:, None] > np.cumsum(p, axis=1)).sum(axis=1)
        return np.minimum(a, self.env.n_actions - 1)

    def entropy(self, states):
        lp = self.log_probs_all(states)
        return -(np.exp(lp) * lp).sum(axis=1)

    def grad_log_prob(self, states, actions, weights):
        z, cache = self.mlp.forward_cache(self._inputs(states))
        p = np.exp(self._log_softmax(z))
        g = -p
        g[np.arange(len(g)), np.asarray(actions, dtype=int)] += 1.0
        return self.mlp.backward(cache, g * np.asarray(weights)[:, None])

    def grad_entropy(self, states, weights):
        z, cache = self.mlp.forward_cache(self._inputs(states))
        lp = self._log_softmax(z)
        p = np.exp(lp)
        H = -(p * lp).sum(axis=1, keepdims=True)
        g = -p * (lp + H)
        return self.mlp.backward(cache, g * np.asarray(weights)[:, None])

    def copy(self):
        return CategoricalPolicy(self.env, self.mlp.copy())

    def to_dict(self):
        return {"kind": self.kind, **self.mlp.to_dict()}


class GaussianPolicy(Policy):
    """Diagonal Gaussian with an MLP mean and a state-independent log-std.

    The standard deviation is floored at ``MIN_STD``.  Sampled actions are
    not clipped here; environments clip when executing them.
    """

    kind = "gaussian-mlp"

    def __init__(self, env: Environment, mlp: Mlp, log_std):
        if mlp.n_outputs != env.action_dim:
            raise DimensionError("policy output width must equal the action dimension")
        self.env = env
        self.mlp = mlp
        self.log_std = np.asarray(log_std, dtype=np.float64).copy()

    @classmethod
    def initialize(cls, env, rng, hidden=(64, 64), init_std=0.5):
        mlp = Mlp.initialize([env.state_feature_dim, *hidden, env.action_dim], rng)
        W, b = mlp.layers()[-1]
        W *= 0.1
        b[:] = 0.0
        return cls(env, mlp, np.full(env.action_dim, np.log(init_std)))

    @property
    def params(self):
        return np.concatenate([self.mlp.params, self.log_std])

    @params.setter
    def params(self, value):
        value = np.asarray(value, dtype=np.float64)
        n = self.mlp.n_params
        self.mlp.params = value[:n].copy()
        self.log_std = value[n:].copy()

    @property
    def std(self):
        return np.exp(self._eff_log_std())

    def _eff_log_std(self):
        return np.maximum(self.log_std, np.log(MIN_STD))

    def mean(self, states):
        return self.mlp.forward(self.env.state_features(states))

    def log_prob(self, states, actions):
        mu = self.mean(states)
        ls = self._eff_log_std()
        z = (np.asarray(actions, dtype=np.float64).reshape(mu.shape) - mu) / np.exp(ls)
        return -0.5 * (z**2).sum(axis=1) - ls.sum() - 0.5 * mu.shape[1] * LOG_2PI

    def sample(self, states, rng):
        mu = self.mean(states)
        return mu + self.std * rng.standard_normal(mu.shape)

    def entropy(self, states):
        n = len(np.asarray(states).reshape(-1, self.env.state_dim))
        h = self._eff_log_std().sum() + 0.5 * self.env.action_dim * (1.0 + LOG_2PI)
        return np.full(n, h)

    def grad_log_prob(self, states, actions, weights):
        w = np.asarray(weights, dtype=np.float64)[:, None]
        mu, cache = self.mlp.forward_cache(self.env.state_features(states))
        var = np.exp(2 * self._eff_log_std())
        diff = np.asarray(actions, dtype=np.float64).reshape(mu.shape) - mu
        g_mlp = self.mlp.backward(cache, w * diff / var)
        g_ls = (w * (diff**2 / var - 1.0)).sum(axis=0)
        g_ls = np.where(self.log_std > np.log(MIN_STD), g_ls, 0.0)
        return np.concatenate([g_mlp, g_ls])

    def grad_entropy(self, states, weights):
        g_ls = np.full(self.env.action_dim, float(np.sum(weights)))
        g_ls = np.where(self.log_std > np.log(MIN_STD), g_ls, 0.0)
        return np.concatenate([np.zeros(self.mlp.n_params), g_ls])

    def copy(self):
        return GaussianPolicy(self.env, self.mlp.copy(), self.log_std)

    def to_dict(self):
        return {"kind": self.kind, **self.mlp.to_dict(), "log_std": self.log_std.tolist()}


def init_policy(env: Environment, rng: np.random.Generator, hidden=(64, 64)) -> Policy:
    """Default policy for an environment: tabular for grids, Gaussian MLP otherwise."""
    if env.is_discrete:
        return CategoricalPolicy.tabular(env)
    return GaussianPolicy.initialize(env, rng, hidden)


def policy_from_dict(d: dict, env: Environment) -> Policy:
    mlp = Mlp.from_dict(d)
    if d["kind"] == CategoricalPolicy.kind:
        return CategoricalPolicy(env, mlp)
    if d["kind"] == GaussianPolicy.kind:
        return GaussianPolicy(env, mlp, d["log_std"])
    raise ValueError(f"unknown policy kind {d['kind']!r}")


def _stack(trajectories):
    states = np.concatenate([t.step_states() for t in trajectories])
    actions = np.concatenate([t.actions for t in trajectories])
    return states, actions


# -- behavioral cloning -------------------------------------------------------


@dataclass
class BcConfig:
    epochs: int = 300
    step_size: Optional[float] = None
    l2_weight: float = 0.0
    seed: int = 0
    hidden: tuple = (64, 64)


def _default_step(policy, step_size):
    if step_size is not None:
        return step_size
    return 0.05 if isinstance(policy, CategoricalPolicy) else 1e-3


def bc_fit(demos, env: Environment, config: BcConfig = BcConfig()):
    """Maximum-likelihood fit on demonstration ``(s, a)`` pairs.

    Returns ``(policy, nll_trace)`` where ``nll_trace[0]`` is the initial
    mean negative log-likelihood and ``nll_trace[k]`` the value after epoch k.
    """
    demos = [d for d in demos if len(d)]
    if not demos:
        raise ValueError("behavioral cloning needs at least one non-empty demonstration")
    states, actions = _stack(demos)
    rng = np.random.default_rng(config.seed)
    policy = init_policy(env, rng, config.hidden)
    opt = Adam(policy.params.size, _default_step(policy, config.step_size))
    n = len(actions)
    trace = [float(-policy.log_prob(states, actions).mean())]
    best_nll, best_params = trace[0], policy.params.copy()
    for _ in range(config.epochs):
        grad = -policy.grad_log_prob(states, actions, np.full(n, 1.0 / n))
        grad = grad + 2 * config.l2_weight * policy.params
        policy.params = opt.step(policy.params, grad)
        nll = float(-policy.log_prob(states, actions).mean())
        trace.append(nll)
        if nll < best_nll:
            best_nll, best_params = nll, policy.params.copy()
    policy.params = best_params
    return policy, trace


def bc_train(demos, env: Environment, config: BcConfig = BcConfig()) -> Policy:
    return bc_fit(demos, env, config)[0]


# -- policy gradient ------------------------------------------------------------


@dataclass
class RlConfig:
    iterations: int = 200
    episodes_per_iteration: int = 16
    discount: Optional[float] = None
    entropy_weight: float = 0.01
    step_size: Optional[float] = None
    eval_every: int = 10
    eval_episodes: int = 16
    seed: int = 0
    hidden: tuple = (64, 64)
    normalize_advantages: bool = True
    baseline: str = "time"
    critic_steps: int = 20

    def __post_init__(self):
        if self.iterations < 1 or self.episodes_per_iteration < 1:
            raise ValueError("iterations and episodes_per_iteration must be positive")
        if self.baseline not in ("time", "value"):
            raise ValueError("baseline must be 'time' or 'value'")
        if self.entropy_weight < 0:
            raise ValueError("entropy_weight must be non-negative")
        if self.discount is not None and not 0 <= self.discount <= 1:
            raise ValueError("discount must lie in [0, 1]")

    def to_dict(self):
        return asdict(self)


def reward_to_go(rewards, discount):
    out = np.empty_like(rewards, dtype=np.float64)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + discount * acc
        out[t] = acc
    return out


class ValueBaseline:
    """State-value critic ``V(s, t / horizon)`` regressed onto reward-to-go.

    Targets are standardized with running moments so one step size serves
    rewards of any scale.
    """

    def __init__(self, env: Environment, rng: np.random.Generator, hidden=(64, 64),
                 step_size=1e-3, steps=20, momentum=0.9):
        self.env = env
        self.mlp = Mlp.initialize([env.state_feature_dim + 1, *hidden, 1], rng)
        self.opt = Adam(self.mlp.n_params, step_size)
        self.steps = steps
        self.momentum = momentum
        self.mean, self.scale = 0.0, None

    def _inputs(self, trajectories):
        states = np.concatenate([t.step_states() for t in trajectories])
        times = np.concatenate([np.arange(len(t)) for t in trajectories]) / self.env.horizon
        return np.hstack([self.env.state_features(states), times[:, None]])

    def predict(self, trajectories) -> np.ndarray:
        if self.scale is None:
            return np.full(sum(len(t) for t in trajectories), self.mean)
        return self.mean + self.scale * self.mlp.forward(self._inputs(trajectories))[:, 0]

    def fit(self, trajectories, targets):
        """A few full-batch Adam steps on the squared error."""
        m, sd = float(np.mean(targets)), float(np.std(targets)) + 1e-8
        if self.scale is None:
            self.mean, self.scale = m, sd
        else:
            k = self.momentum
            self.mean, self.scale = k * self.mean + (1 - k) * m, k * self.scale + (1 - k) * sd
        x = self._inputs(trajectories)
        y = (np.asarray(targets) - self.mean) / self.scale
        for _ in range(self.steps):
            out, cache = self.mlp.forward_cache(x)
            grad = self.mlp.backward(cache, 2.0 * (out - y[:, None]) / len(y))
            optimize_step(self.opt, self.mlp, grad)


def advantages(trajectories, step_rewards, discount, normalize=True, critic=None):
    """Discounted reward-to-go minus a baseline.

    The baseline is the across-episode mean at the same time index, or the
    critic's prediction when one is given; the critic is then refit on the
    new returns.
    """
    rtg = [reward_to_go(r, discount) for r in step_rewards]
    if critic is not None:
        flat = np.concatenate(rtg)
        adv = flat - critic.predict(trajectories)
        critic.fit(trajectories, flat)
        if normalize and adv.size > 1:
            sd = adv.std()
            adv = adv / sd if sd > 1e-12 else np.zeros_like(adv)
        return adv
    T = max((len(r) for r in rtg), default=0)
    sums, counts = np.zeros(T), np.zeros(T)
    for r in rtg:
        sums[: len(r)] += r
        counts[: len(r)] += 1
    baseline = sums / np.maximum(counts, 1)
    adv = np.concatenate([r - baseline[: len(r)] for r in rtg]) if rtg else np.zeros(0)
    if normalize and adv.size > 1:
        sd = adv.std()
        adv = adv / sd if sd > 1e-12 else np.zeros_like(adv)
    return adv


def policy_gradient(policy: Policy, trajectories, step_rewards, discount, entropy_weight,
                    normalize=True, critic=None):
    """Return ``(reward_term_grad, entropy_term_grad)`` of the loss to minimise."""
    states, actions = _stack(trajectories)
    adv = advantages(trajectories, step_rewards, discount, normalize, critic)
    n = len(actions)
    g_reward = -policy.grad_log_prob(states, actions, adv / n)
    g_ent = -entropy_weight * policy.grad_entropy(states, np.full(n, 1.0 / n))
    return g_reward, g_ent


def _rewards_per_traj(reward, trajectories):
    states, actions = _stack(trajectories)
    r = np.asarray(reward(states, actions), dtype=np.float64)
    check_finite(r, "reward")
    out, i = [], 0
    for t in trajectories:
        out.append(r[i : i + len(t)])
        i += len(t)
    return out


def mean_return(reward, trajectories) -> float:
    return float(np.mean([r.sum() for r in _rewards_per_traj(reward, trajectories)]))


def pg_train(env: Environment, reward: Callable, config: RlConfig = RlConfig(),
             rng: Optional[np.random.Generator] = None, policy: Optional[Policy] = None,
             callback: Optional[Callable] = None) -> Policy:
    """Entropy-regularized REINFORCE with a time-indexed or learned baseline.

    Args:
        env: Environment to act in.
        reward: ``reward(states, actions) -> per-step rewards``; a learned
            reward model or a ground-truth evaluator.
        config: Training settings.
        rng: Source of rollout randomness; defaults to ``config.seed``.
        policy: Starting policy. A fresh default policy when omitted.
        callback: Called as ``callback(iteration, policy)`` after every update.

    Returns:
        A copy of the policy whose held-out mean return under ``reward`` was
        highest among the evaluated iterations.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    if policy is None:
        policy = init_policy(env, rng, config.hidden)
    else:
        policy = policy.copy()
    discount = env.discount if config.discount is None else config.discount
    opt = Adam(policy.params.size, _default_step(policy, config.step_size))
    eval_seed = int(rng.integers(2**31))
    critic = None
    if config.baseline == "value":
        critic = ValueBaseline(env, np.random.default_rng(int(rng.integers(2**31))),
                               config.hidden, steps=config.critic_steps)

    def evaluate(p):
        trajs = rollout_batch(env, p.sample, config.eval_episodes, np.random.default_rng(eval_seed))
        return mean_return(reward, trajs)

    best_score, best = evaluate(policy), policy.copy()
    for it in range(config.iterations):
        trajs = rollout_batch(env, policy.sample, config.episodes_per_iteration, rng)
        rewards = _rewards_per_traj(reward, trajs)
        g_r, g_e = policy_gradient(policy, trajs, rewards, discount, config.entropy_weight,
                                   config.normalize_advantages, critic)
        policy.params = opt.step(policy.params, g_r + g_e)
        if callback is not None:
            callback(it, policy)
        if (it + 1) % config.eval_every == 0 or it == config.iterations - 1:
            score = evaluate(policy)
            logger.debug("pg iteration %d: held-out return %.3f", it + 1, score)
            if score > best_score:
                best_score, best = score, policy.copy()
    return best


class BehavioralCloning(BaseEstimator):
    """Estimator form of :func:`bc_fit`.

    ``fit(demos)`` clones the demonstrations; ``predict(states)`` returns the
    most likely action (discrete) or the mean action (continuous) and
    ``score(demos)`` the mean log-likelihood of the demonstrated actions.
    """

    def __init__(self, env: Optional[Environment] = None, epochs=300, step_size=None,
                 l2_weight=0.0, hidden=(64, 64), random_state=0):
        self.env = env
        self.epochs = epochs
        self.step_size = step_size
        self.l2_weight = l2_weight
        self.hidden = hidden
        self.random_state = random_state

    def fit(self, demos, y=None):
        if self.env is None:
            raise ValueError("BehavioralCloning needs an environment")
        cfg = BcConfig(epochs=self.epochs, step_size=self.step_size, l2_weight=self.l2_weight,
                       seed=self.random_state, hidden=tuple(self.hidden))
        self.policy_, self.nll_trace_ = bc_fit(list(demos), self.env, cfg)
        return self

    def predict(self, states):
        check_is_fitted(self, "policy_")
        states = np.asarray(states, dtype=np.float64)
        if isinstance(self.policy_, CategoricalPolicy):
            return self.policy_.probs(states).argmax(axis=1)
        return self.policy_.mean(states)

    def score(self, demos, y=None):
        check_is_fitted(self, "policy_")
        states, actions = _stack([d for d in demos if len(d)])
        return float(self.policy_.log_prob(states, actions).mean())
