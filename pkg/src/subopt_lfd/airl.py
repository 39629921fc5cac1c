"""Adversarial IRL and its noise-injected, importance-weighted variant.

The discriminator is ``D(s, a) = exp f(s, a) / (exp f(s, a) + pi(a|s))``,
evaluated in log space as ``sigmoid(f(s, a) - log pi(a|s))``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .envs import Environment, rollout_batch
from .exceptions import NonFiniteError
from .noise import NoisyPolicy
from .nn import Adam, check_finite
from .policies import (
    BcConfig,
    Policy,
    _rewards_per_traj,
    _stack,
    bc_train,
    init_policy,
    policy_gradient,
)
from .rewards import RewardModel

logger = logging.getLogger(__name__)

DEFAULT_NOISE_SCHEDULE = (0.0, 0.0, 0.0, 0.0, 0.0, 0.05, 0.10, 0.15, 0.20, 0.25)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return np.exp(-_softplus(-x))


def discriminator_logit(f_values, log_pi):
    """``f - log pi``; ``+inf`` where ``log pi`` is ``-inf``."""
    with np.errstate(invalid="ignore"):
        return np.where(np.isneginf(log_pi), np.inf, np.asarray(f_values) - log_pi)


def discriminator_prob(disc: RewardModel, policy: Policy, states, actions):
    """``D(s, a)`` for a batch; 1 where the policy gives the action zero density."""
    x = discriminator_logit(disc(states, actions), policy.log_prob(states, actions))
    return np.where(np.isposinf(x), 1.0, _sigmoid(np.where(np.isposinf(x), 0.0, x)))


def _disc_terms(disc, policy, states, actions):
    f, cache = disc.forward_cache(states, actions)
    lp = policy.log_prob(states, actions)
    if not np.all(np.isfinite(lp)):
        raise NonFiniteError("policy log-density is not finite on a discriminator batch")
    return f - lp, cache


def airl_disc_loss(disc: RewardModel, policy: Policy, expert_batch, policy_batch):
    """Cross-entropy discriminator loss and its gradient w.r.t. ``disc.params``.

    ``-mean log D`` over the expert batch ``- mean log(1 - D)`` over the
    policy batch.  The policy density is held fixed.
    """
    return noisy_airl_disc_loss(disc, policy, None, expert_batch, policy_batch)


def importance_weights(policy: Policy, noisy: NoisyPolicy, states, actions, eta=None):
    """``pi(a|s) / pi_eta(a|s)`` for actions drawn from the noisy policy."""
    lp = policy.log_prob(states, actions)
    lq = noisy.log_prob(states, actions, eta)
    if np.any(np.isneginf(lq)):
        raise NonFiniteError("noisy policy assigns zero density to a sampled action")
    return np.exp(lp - lq)


def noisy_airl_disc_loss(disc: RewardModel, policy: Policy, noisy: Optional[NoisyPolicy],
                         expert_batch, noisy_batch, eta=None):
    """Importance-weighted discriminator loss.

    The second expectation is over samples from ``noisy`` and each
    ``log(1 - D)`` term is scaled by ``pi(a|s) / pi_eta(a|s)``.  ``eta``
    optionally gives each noisy sample its own generating level.  With
    ``noisy=None`` (or every level zero) the weights are exactly one and
    the standard loss is recovered.

    Returns:
        ``(loss, grad)`` with ``grad`` w.r.t. ``disc.params``.
    """
    (se, ae), (sp, ap) = expert_batch, noisy_batch
    if len(ae) == 0 or len(ap) == 0:
        raise ValueError("expert and policy batches must be non-empty")
    xe, ce = _disc_terms(disc, policy, se, ae)
    xp, cp = _disc_terms(disc, policy, sp, ap)
    if noisy is None:
        w = np.ones(len(ap))
    else:
        w = importance_weights(policy, noisy, sp, ap, eta)
    ne, npol = len(ae), len(ap)
    loss = _softplus(-xe).mean() + (w * _softplus(xp)).mean()
    check_finite(loss, "discriminator loss")
    grad = disc.backward(ce, -_sigmoid(-xe) / ne) + disc.backward(cp, w * _sigmoid(xp) / npol)
    return float(loss), grad


def scaled_schedule(episodes: int, base: Sequence[float] = DEFAULT_NOISE_SCHEDULE) -> list:
    """Stretch or shrink the per-step noise schedule to ``episodes`` entries."""
    n = len(base)
    return [float(base[(i * n) // episodes]) for i in range(episodes)]


@dataclass
class AirlConfig:
    train_steps: int = 200
    episodes_per_step: int = 10
    discriminator_updates_per_step: int = 10
    noisy: bool = False
    noise_schedule: Optional[list] = None
    disc_batch_size: int = 256
    disc_step_size: float = 1e-3
    policy_step_size: Optional[float] = None
    entropy_weight: float = 0.01
    warm_start_bc: bool = False
    hidden: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if self.noisy:
            if self.noise_schedule is None:
                self.noise_schedule = scaled_schedule(self.episodes_per_step)
            if len(self.noise_schedule) != self.episodes_per_step:
                raise ValueError("noise_schedule needs one level per episode")
            if any(not 0 <= e <= 1 for e in self.noise_schedule):
                raise ValueError("noise levels must lie in [0, 1]")

    def to_dict(self):
        return asdict(self)


class AirlTrainer:
    """Alternating discriminator/generator training.

    After :meth:`train`, ``reward_`` is the learned ``f`` and ``policy_`` the
    generator.  ``history_`` holds one row per step with the discriminator
    loss, the mean generator return under ``f`` and, when an evaluator is
    supplied, the mean ground-truth return.
    """

    def __init__(self, env: Environment, config: AirlConfig = AirlConfig(), evaluator=None):
        self.env = env
        self.config = config
        self.evaluator = evaluator

    def _expert_sample(self, rng, states, actions, n):
        idx = rng.integers(0, len(actions), size=n)
        return states[idx], actions[idx]

    def train(self, demos, rng: Optional[np.random.Generator] = None):
        cfg = self.config
        env = self.env
        demos = [d for d in demos if len(d)]
        if not demos:
            raise ValueError("AIRL needs at least one non-empty demonstration")
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        disc = RewardModel.initialize(env, rng, cfg.hidden, kind="airl-reward")
        if cfg.warm_start_bc:
            policy = bc_train(demos, env, BcConfig(seed=int(rng.integers(2**31)), hidden=cfg.hidden))
        else:
            policy = init_policy(env, rng, cfg.hidden)
        d_opt = Adam(disc.params.size, cfg.disc_step_size)
        p_step = cfg.policy_step_size or (0.05 if env.is_discrete else 1e-3)
        p_opt = Adam(policy.params.size, p_step)
        etas = np.asarray(cfg.noise_schedule if cfg.noisy else [0.0] * cfg.episodes_per_step)
        es, ea = _stack(demos)
        self.history_ = []
        for step in range(cfg.train_steps):
            noisy = NoisyPolicy(policy, etas, env)
            trajs = rollout_batch(env, noisy.sample, cfg.episodes_per_step, rng)
            per_sample_eta = np.concatenate([np.full(len(t), e) for t, e in zip(trajs, etas)])
            ps, pa = _stack(trajs)
            losses = []
            for _ in range(cfg.discriminator_updates_per_step):
                n = min(cfg.disc_batch_size, len(pa))
                idx = rng.integers(0, len(pa), size=n)
                batch_e = self._expert_sample(rng, es, ea, n)
                if cfg.noisy:
                    loss, g = noisy_airl_disc_loss(disc, policy, noisy, batch_e, (ps[idx], pa[idx]),
                                                   per_sample_eta[idx])
                else:
                    loss, g = airl_disc_loss(disc, policy, batch_e, (ps[idx], pa[idx]))
                disc.params = d_opt.step(disc.params, g)
                losses.append(loss)
            on_policy = [t for t, e in zip(trajs, etas) if e == 0.0]
            if not on_policy:
                on_policy = rollout_batch(env, policy.sample, cfg.episodes_per_step, rng)
            rewards = _rewards_per_traj(disc, on_policy)
            g_r, g_e = policy_gradient(policy, on_policy, rewards, env.discount, cfg.entropy_weight)
            policy.params = p_opt.step(policy.params, g_r + g_e)
            row = {
                "step": step,
                "disc_loss": float(np.mean(losses)),
                "mean_pseudo_return": float(np.mean([r.sum() for r in rewards])),
            }
            if self.evaluator is not None:
                row["mean_gt_return"] = float(
                    np.mean([self.evaluator.trajectory_return(t) for t in on_policy])
                )
            self.history_.append(row)
        self.reward_ = disc
        self.policy_ = policy
        return disc, policy


def airl_train(demos, env: Environment, config: AirlConfig = AirlConfig(),
               rng: Optional[np.random.Generator] = None):
    """Run AIRL (or Noisy-AIRL when ``config.noisy``); returns ``(reward, policy)``."""
    return AirlTrainer(env, config).train(demos, rng)


class AIRL(BaseEstimator):
    """Estimator form of AIRL / Noisy-AIRL.

    ``fit(demos)`` trains the discriminator and generator; ``predict`` gives
    learned returns of trajectories under ``f`` and ``transform`` the
    per-step ``f`` values of ``(states, actions)``.
    """

    def __init__(self, env: Optional[Environment] = None, noisy=False, train_steps=200,
                 episodes_per_step=10, discriminator_updates_per_step=10, noise_schedule=None,
                 disc_batch_size=256, disc_step_size=1e-3, policy_step_size=None,
                 entropy_weight=0.01, hidden=(64, 64), random_state=0):
        self.env = env
        self.noisy = noisy
        self.train_steps = train_steps
        self.episodes_per_step = episodes_per_step
        self.discriminator_updates_per_step = discriminator_updates_per_step
        self.noise_schedule = noise_schedule
        self.disc_batch_size = disc_batch_size
        self.disc_step_size = disc_step_size
        self.policy_step_size = policy_step_size
        self.entropy_weight = entropy_weight
        self.hidden = hidden
        self.random_state = random_state

    def fit(self, demos, y=None, evaluator=None):
        if self.env is None:
            raise ValueError("AIRL needs an environment")
        cfg = AirlConfig(
            train_steps=self.train_steps, episodes_per_step=self.episodes_per_step,
            discriminator_updates_per_step=self.discriminator_updates_per_step,
            noisy=self.noisy,
            noise_schedule=None if self.noise_schedule is None else list(self.noise_schedule),
            disc_batch_size=self.disc_batch_size, disc_step_size=self.disc_step_size,
            policy_step_size=self.policy_step_size, entropy_weight=self.entropy_weight,
            hidden=tuple(self.hidden), seed=self.random_state,
        )
        trainer = AirlTrainer(self.env, cfg, evaluator)
        self.reward_, self.policy_ = trainer.train(list(demos), np.random.default_rng(self.random_state))
        self.history_ = trainer.history_
        return self

    def predict(self, trajectories):
        check_is_fitted(self, "reward_")
        return self.reward_.returns(trajectories)

    def transform(self, states, actions):
        check_is_fitted(self, "reward_")
        return self.reward_(states, actions)
