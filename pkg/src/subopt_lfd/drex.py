"""D-REX baseline: pairwise Luce-Shepard ranking over noise-ranked snippets."""

from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dataset
from .envs import Environment
from .nn import Adam, check_finite
from .noise import NoisyDataset
from .rewards import RewardModel
from .ssrr import _SegmentBatch, dataset_digest, dataset_features, default_snippet_range, env_for

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankedPair:
    """Segments ``(traj, start, stop)``; ``better`` comes from the lower noise level."""

    better: tuple
    worse: tuple


@dataclass
class DrexConfig:
    pairs_per_epoch: int = 2000
    batch_size: int = 64
    epochs: int = 50
    step_size: float = 1e-3
    l2_weight: float = 0.0
    snippet_len_min: Optional[int] = None
    snippet_len_max: Optional[int] = None
    hidden: tuple = (64, 64)
    seed: int = 0

    def snippet_range(self, horizon):
        lo, hi = default_snippet_range(horizon)
        lo = lo if self.snippet_len_min is None else self.snippet_len_min
        hi = hi if self.snippet_len_max is None else self.snippet_len_max
        if not 1 <= lo <= hi:
            raise ValueError("need 1 <= snippet_len_min <= snippet_len_max")
        return lo, hi

    def to_dict(self):
        return asdict(self)


def build_pairs(dataset: NoisyDataset, n_pairs: int, config: DrexConfig = DrexConfig(),
                rng: Optional[np.random.Generator] = None, horizon=None):
    """Sample equal-length snippet pairs from trajectories at different noise levels."""
    check_dataset(dataset, min_levels=2)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    etas = dataset.etas
    lengths = np.array([len(t) for t in dataset.trajectories])
    horizon = int(lengths.max()) if horizon is None else horizon
    lo, hi = config.snippet_range(horizon)
    pairs = []
    while len(pairs) < n_pairs:
        i, j = (int(v) for v in rng.integers(0, len(dataset), size=2))
        if etas[i] == etas[j]:
            continue
        if etas[i] > etas[j]:
            i, j = j, i
        m = int(min(lengths[i], lengths[j]))
        n = m if m < lo else int(rng.integers(lo, min(hi, m) + 1))
        si = int(rng.integers(0, lengths[i] - n + 1))
        sj = int(rng.integers(0, lengths[j] - n + 1))
        pairs.append(RankedPair((i, si, si + n), (j, sj, sj + n)))
    return pairs


def exhaustive_pairs(dataset: NoisyDataset):
    """Every cross-level pair of whole trajectories, better first."""
    check_dataset(dataset, min_levels=2)
    etas = dataset.etas
    out = []
    for i, j in itertools.combinations(range(len(dataset)), 2):
        if etas[i] == etas[j]:
            continue
        if etas[i] > etas[j]:
            i, j = j, i
        out.append(RankedPair((i, 0, len(dataset.trajectories[i])),
                              (j, 0, len(dataset.trajectories[j]))))
    return out


def _softplus(x):
    return np.logaddexp(0.0, x)


def pair_loss(better_sum, worse_sum):
    """``-log(exp(b) / (exp(b) + exp(w)))`` evaluated stably."""
    return _softplus(np.asarray(worse_sum) - np.asarray(better_sum))


def _loss_from_rows(model, better, worse, l2_weight):
    n = len(better.lengths)
    rows = np.vstack([better.rows, worse.rows])
    out, cache = model.mlp.forward_cache(rows)
    r = out[:, 0]
    nb = len(better.rows)
    sb, sw = better.sums(r[:nb]), worse.sums(r[nb:])
    loss = float(np.mean(pair_loss(sb, sw))) + l2_weight * float(model.params @ model.params)
    check_finite(loss, "D-REX loss")
    p = np.exp(-_softplus(sb - sw))
    g = np.concatenate([(-p / n)[better.seg_id], (p / n)[worse.seg_id]])
    grad = model.mlp.backward(cache, g[:, None]) + 2.0 * l2_weight * model.params
    return loss, grad


def drex_loss(model: RewardModel, pairs, dataset: NoisyDataset, l2_weight=0.0):
    """Mean pairwise ranking loss; returns ``(loss, grad)``."""
    if not pairs:
        raise ValueError("pair list is empty")
    feats, offsets = dataset_features(dataset, model)
    better = _SegmentBatch(feats, offsets, [p.better for p in pairs])
    worse = _SegmentBatch(feats, offsets, [p.worse for p in pairs])
    return _loss_from_rows(model, better, worse, l2_weight)


def three_trajectory_loss(r1, r2, r3):
    """Ranking loss over the pairs (1,2), (1,3), (2,3) of three returns."""
    return (pair_loss(r1, r2) + pair_loss(r1, r3) + pair_loss(r2, r3)) / 3.0


def middle_return_oracle(r1: float, r3: float) -> float:
    """Numerically minimise the three-trajectory ranking loss over the middle return."""
    lo, hi = min(r1, r3) - 50.0, max(r1, r3) + 50.0
    res = minimize_scalar(lambda r2: three_trajectory_loss(r1, r2, r3), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-10})
    return float(res.x)


def drex_train(dataset: NoisyDataset, config: DrexConfig = DrexConfig(),
               rng: Optional[np.random.Generator] = None, env: Optional[Environment] = None,
               trace: Optional[list] = None) -> RewardModel:
    """Fit a state-only reward with the ranking loss on freshly sampled pairs each epoch."""
    check_dataset(dataset, min_levels=2)
    env = env_for(dataset, env)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    model = RewardModel.initialize(env, rng, config.hidden, state_only=True, kind="drex-reward")
    model.provenance = {"dataset_digest": dataset_digest(dataset), **dataset.provenance}
    feats, offsets = dataset_features(dataset, model)
    opt = Adam(model.params.size, config.step_size)
    trace = [] if trace is None else trace
    for epoch in range(config.epochs):
        pairs = build_pairs(dataset, config.pairs_per_epoch, config, rng, env.horizon)
        losses = []
        for b in range(0, len(pairs), config.batch_size):
            chunk = pairs[b : b + config.batch_size]
            better = _SegmentBatch(feats, offsets, [p.better for p in chunk])
            worse = _SegmentBatch(feats, offsets, [p.worse for p in chunk])
            loss, grad = _loss_from_rows(model, better, worse, config.l2_weight)
            model.params = opt.step(model.params, grad)
            losses.append(loss * len(chunk))
        trace.append(float(np.sum(losses) / len(pairs)))
        logger.debug("drex epoch %d: loss %.4f", epoch, trace[-1])
    return model


class DREX(BaseEstimator):
    """Estimator form of the ranking baseline; ``predict`` gives trajectory returns."""

    def __init__(self, pairs_per_epoch=2000, batch_size=64, epochs=50, step_size=1e-3,
                 l2_weight=0.0, snippet_len_min=None, snippet_len_max=None, hidden=(64, 64),
                 random_state=0):
        self.pairs_per_epoch = pairs_per_epoch
        self.batch_size = batch_size
        self.epochs = epochs
        self.step_size = step_size
        self.l2_weight = l2_weight
        self.snippet_len_min = snippet_len_min
        self.snippet_len_max = snippet_len_max
        self.hidden = hidden
        self.random_state = random_state

    def fit(self, dataset: NoisyDataset, env=None):
        cfg = DrexConfig(self.pairs_per_epoch, self.batch_size, self.epochs, self.step_size,
                         self.l2_weight, self.snippet_len_min, self.snippet_len_max,
                         tuple(self.hidden), self.random_state)
        self.loss_trace_ = []
        self.reward_ = drex_train(dataset, cfg, np.random.default_rng(self.random_state), env,
                                  self.loss_trace_)
        return self

    def predict(self, trajectories):
        check_is_fitted(self, "reward_")
        return self.reward_.returns(trajectories)
