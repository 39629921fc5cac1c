"""Shared test utilities."""

import numpy as np

from subopt_lfd.envs import rollout_batch
from subopt_lfd.noise import NoisyDataset, NoisyTrajectory


def fd_gradient(f, x, eps=1e-5):
    """Central finite differences of scalar ``f`` at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2 * eps)
    return g


def max_rel_error(analytic, numeric, floor=1e-6):
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def random_dataset(env, levels=(0.0, 0.5, 1.0), per_level=3, seed=0, max_len=None):
    """Uniform-random rollouts tagged with arbitrary noise levels."""
    rng = np.random.default_rng(seed)
    out = []
    for eta in levels:
        for t in rollout_batch(env, lambda s, r: env.uniform_actions(len(s), r), per_level, rng):
            if max_len is not None:
                t = t.slice(0, min(max_len, len(t)))
            out.append(NoisyTrajectory(eta, t, rng.normal(size=len(t))))
    return NoisyDataset(out, list(levels), {"env": env.to_dict()})




def constant_reward(env, value, state_only=False):
    """Linear reward model that outputs ``value`` on every step."""
    from subopt_lfd.nn import Mlp
    from subopt_lfd.rewards import RewardModel

    n_in = env.reward_state_feature_dim + (0 if state_only else env.reward_action_feature_dim)
    model = RewardModel(env, Mlp([n_in, 1]), state_only=state_only)
    (_, b), = model.mlp.layers()
    b[:] = value
    return model


LOSS_KINDS = ("airl", "noisy-airl", "drex", "ssrr")


def gradient_instance_error(kind, seed):
    """Max relative error between analytic and finite-difference gradients on one random instance."""
    from subopt_lfd.airl import airl_disc_loss, noisy_airl_disc_loss
    from subopt_lfd.drex import DrexConfig, build_pairs, drex_loss
    from subopt_lfd.envs import GridNav, PointReach
    from subopt_lfd.noise import NoisyPolicy
    from subopt_lfd.policies import init_policy
    from subopt_lfd.rewards import RewardModel
    from subopt_lfd.sigmoid import SigmoidParams
    from subopt_lfd.ssrr import SsrrConfig, sample_snippets, ssrr_loss

    rng = np.random.default_rng([seed, LOSS_KINDS.index(kind)])
    env = GridNav(size=int(rng.integers(3, 6)), horizon=12) if seed % 2 == 0 else PointReach(horizon=12)
    hidden = tuple(int(h) for h in rng.integers(2, 7, size=int(rng.integers(1, 3))))
    if kind in ("airl", "noisy-airl"):
        disc = RewardModel.initialize(env, rng, hidden)
        policy = init_policy(env, rng, (4,))
        ds = random_dataset(env, levels=(0.0,), per_level=2, seed=seed)
        states = np.concatenate([t.trajectory.step_states() for t in ds.trajectories])
        actions = np.concatenate([t.actions for t in ds.trajectories])
        ie = rng.integers(0, len(actions), size=int(rng.integers(2, 9)))
        ip = rng.integers(0, len(actions), size=int(rng.integers(2, 9)))
        e, p = (states[ie], actions[ie]), (states[ip], actions[ip])
        if kind == "airl":
            loss = lambda m: airl_disc_loss(m, policy, e, p)
        else:
            etas = rng.uniform(0.05, 1.0, size=len(ip))
            noisy = NoisyPolicy(policy, etas, env)
            loss = lambda m: noisy_airl_disc_loss(m, policy, noisy, e, p, etas)
        model = disc
    else:
        ds = random_dataset(env, levels=(0.0, 0.5, 1.0), per_level=2, seed=seed)
        if kind == "drex":
            model = RewardModel.initialize(env, rng, hidden, state_only=True)
            pairs = build_pairs(ds, int(rng.integers(2, 9)), DrexConfig(), rng)
            l2 = float(rng.uniform(0, 0.1))
            loss = lambda m: drex_loss(m, pairs, ds, l2)
        else:
            model = RewardModel.initialize(env, rng, hidden)
            sigma = SigmoidParams(*rng.normal(size=4))
            snips = sample_snippets(ds, sigma, SsrrConfig(), rng, n=int(rng.integers(2, 9)))
            l2 = float(rng.uniform(0, 0.2))
            loss = lambda m: ssrr_loss(m, snips, ds, l2)

    def f(theta):
        m = model.copy()
        m.params = theta
        return loss(m)[0]

    return max_rel_error(loss(model)[1], fd_gradient(f, model.params))


def run_all_stages(cfg, seed, out):
    """Run every single stage in order into ``out``; returns the written paths."""
    from subopt_lfd.pipeline import STAGES, run_stage

    paths = []
    for stage in STAGES:
        paths += run_stage(stage, cfg, seed, out)
    return paths


def tree_bytes(root):
    """Map of relative path to file bytes for every file under ``root``."""
    from pathlib import Path

    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
