"""Reward-accuracy and policy-performance measurements.

This is the only module (besides tests) that reads ground-truth rewards.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .envs import Environment, GroundTruthEvaluator, Trajectory, rollout_batch
from .noise import NoisyDataset
from .policies import Policy, RlConfig, pg_train


def pearson(xs, ys) -> float:
    """Pearson correlation; raises ``ValueError`` instead of returning NaN."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise ValueError("correlation is undefined for a constant vector")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def learned_returns(reward, trajectories) -> np.ndarray:
    """Per-trajectory sums of ``reward(states, actions)``."""
    if hasattr(reward, "returns"):
        return np.asarray(reward.returns(trajectories))
    return np.array([float(np.sum(reward(t.step_states(), t.actions))) for t in trajectories])


@dataclass
class TrajectorySpectrum:
    """Held-out trajectories with their ground-truth returns."""

    trajectories: list
    returns: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=np.float64)
        if len(self.trajectories) != len(self.returns):
            raise ValueError("one return per trajectory")
        if len(self.trajectories) < 10:
            raise ValueError("a spectrum needs at least 10 trajectories")
        if return_deciles(self.returns) < 3:
            raise ValueError("spectrum returns must cover at least 3 deciles of their range")

    def to_dict(self):
        return {
            "provenance": self.provenance,
            "returns": self.returns.tolist(),
            "trajectories": [t.to_dict() for t in self.trajectories],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([Trajectory.from_dict(t) for t in d["trajectories"]], d["returns"],
                    d.get("provenance", {}))


def return_deciles(returns) -> int:
    """Number of occupied bins when ``[min, max]`` is cut into ten equal bins."""
    r = np.asarray(returns, dtype=np.float64)
    lo, hi = r.min(), r.max()
    if hi == lo:
        return 1
    bins = np.minimum(((r - lo) / (hi - lo) * 10).astype(int), 9)
    return len(np.unique(bins))


def checkpoint_spectrum(env: Environment, n_trajectories=50, checkpoint_every=10,
                        config: Optional[RlConfig] = None, seed=0) -> TrajectorySpectrum:
    """One trajectory from each of ``n_trajectories`` partially trained policies.

    A policy is trained on the ground-truth reward and snapshotted every
    ``checkpoint_every`` iterations, starting from the untrained policy.
    """
    evaluator = env.evaluator()
    if config is None:
        config = RlConfig(step_size=0.005 if env.is_discrete else 2e-4, entropy_weight=0.0)
    config = RlConfig(**{**config.to_dict(), "iterations": (n_trajectories - 1) * checkpoint_every,
                         "seed": seed})
    rng = np.random.default_rng(seed)
    traj_rng = np.random.default_rng([seed, 1])
    trajs = []

    def snap(it, policy):
        if (it + 1) % checkpoint_every == 0:
            trajs.append(rollout_batch(env, policy.sample, 1, traj_rng)[0])

    from .policies import init_policy

    start = init_policy(env, rng, config.hidden)
    trajs.append(rollout_batch(env, start.sample, 1, traj_rng)[0])
    pg_train(env, evaluator, config, rng, policy=start, callback=snap)
    returns = [evaluator.trajectory_return(t) for t in trajs]
    return TrajectorySpectrum(trajs, returns, {"kind": "checkpoint-spectrum", "seed": seed,
                                               "env": env.to_dict()})


def noise_spectrum(dataset: NoisyDataset, env: Environment) -> TrajectorySpectrum:
    evaluator = env.evaluator()
    trajs = [t.trajectory for t in dataset.trajectories]
    return TrajectorySpectrum(trajs, [evaluator.trajectory_return(t) for t in trajs],
                              {"kind": "noise-spectrum", **dataset.provenance})


def correlation_report(reward, spectrum: TrajectorySpectrum) -> float:
    return pearson(learned_returns(reward, spectrum.trajectories), spectrum.returns)


def ranking_accuracy(reward, dataset: NoisyDataset) -> float:
    """Fraction of cross-level pairs where the lower-noise trajectory scores strictly higher.

    Ties count as wrong.
    """
    etas = dataset.etas
    if len(np.unique(etas)) < 2:
        raise ValueError("ranking accuracy needs at least two noise levels")
    scores = learned_returns(reward, [t.trajectory for t in dataset.trajectories])
    lower = etas[:, None] < etas[None, :]
    correct = lower & (scores[:, None] > scores[None, :])
    return float(correct.sum() / lower.sum())


def policy_returns(policy: Policy, env: Environment, episodes: int, rng) -> np.ndarray:
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    evaluator = env.evaluator()
    return np.array([evaluator.trajectory_return(t)
                     for t in rollout_batch(env, policy.sample, episodes, rng)])


def policy_eval(policy: Policy, env: Environment, episodes: int, rng):
    """``(mean, std)`` of ground-truth episode returns."""
    r = policy_returns(policy, env, episodes, rng)
    return float(r.mean()), float(r.std())


def performance_ratio(value: float, reference: float) -> float:
    """How many times better ``value`` is than ``reference``.

    For positive references this is ``value / reference``.  When returns
    are costs (reference below zero) it is ``reference / value``, the factor
    by which the cost shrank.  A reference of zero has no ratio.
    """
    if reference > 0:
        return value / reference
    if reference < 0:
        return reference / value if value < 0 else float("inf")
    raise ValueError("performance ratio is undefined for a zero reference")


@dataclass
class EvalReport:
    pearson_train: Optional[float] = None
    pearson_test: Optional[float] = None
    pearson_pooled: Optional[float] = None
    ranking_accuracy: Optional[float] = None
    policy_mean_return: Optional[float] = None
    policy_std_return: Optional[float] = None
    demo_mean_return: Optional[float] = None
    improvement_ratio: Optional[float] = None

    def __post_init__(self):
        for name in ("pearson_train", "pearson_test", "pearson_pooled"):
            v = getattr(self, name)
            if v is not None and not -1.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [-1, 1]")
        if self.ranking_accuracy is not None and not 0 <= self.ranking_accuracy <= 1:
            raise ValueError("ranking_accuracy must lie in [0, 1]")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def normalize_to_range(values, target):
    """Affine map of ``values`` onto ``[min(target), max(target)]`` (plot export only)."""
    v = np.asarray(values, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    span = v.max() - v.min()
    if span == 0:
        return np.full_like(v, t.mean())
    return (v - v.min()) / span * (t.max() - t.min()) + t.min()


def noise_curve_csv(etas, gt_returns, fit_params) -> str:
    """``eta, mean_gt_return, sigmoid_fit`` rows, one per noise level."""
    from .sigmoid import level_means, sigmoid_eval

    levels, means = level_means(etas, gt_returns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eta", "mean_gt_return", "sigmoid_fit"])
    for e, m in zip(levels, means):
        w.writerow([repr(float(e)), repr(float(m)), repr(float(sigmoid_eval(fit_params, e)))])
    return buf.getvalue()


def correlation_csv(splits: dict) -> str:
    """``gt_return, learned_return, split_tag`` rows; learned returns normalized per split set.

    ``splits`` maps a tag (``demo``, ``train``, ``test``) to a pair of
    ``(gt_returns, learned_returns)``.
    """
    gt_all = np.concatenate([np.asarray(g, float) for g, _ in splits.values()])
    lr_all = np.concatenate([np.asarray(l, float) for _, l in splits.values()])
    norm = normalize_to_range(lr_all, gt_all)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["gt_return", "learned_return", "split_tag"])
    i = 0
    for tag, (g, _) in splits.items():
        for gv in g:
            w.writerow([repr(float(gv)), repr(float(norm[i])), tag])
            i += 1
    return buf.getvalue()
