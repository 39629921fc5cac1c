"""Self-supervised reward regression.

A per-step reward ``R(s, a)`` is regressed so that the sum over a snippet
of a noisy trajectory matches the fitted sigmoid at that trajectory's
noise level, scaled by the fraction of the trajectory the snippet covers.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dataset
from .envs import Environment, env_from_dict
from .exceptions import ProvenanceError
from .nn import Adam, check_finite
from .noise import NoisyDataset
from .rewards import RewardModel
from .sigmoid import FitReport, SigmoidParams, sigmoid_eval

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Snippet:
    """Actions ``start .. stop-1`` of trajectory ``traj`` (0-based, half open)."""

    traj: int
    start: int
    stop: int
    target: float

    @property
    def length(self) -> int:
        return self.stop - self.start


def default_snippet_range(horizon: int):
    """5% to 50% of the horizon, at least two steps."""
    lo = max(2, math.ceil(0.05 * horizon))
    hi = max(lo, int(0.5 * horizon))
    return lo, hi


@dataclass
class SsrrConfig:
    snippet_len_min: Optional[int] = None
    snippet_len_max: Optional[int] = None
    snippets_per_epoch: int = 2000
    batch_size: int = 64
    epochs: int = 50
    l2_weight: float = 0.1
    step_size: float = 1e-3
    full_trajectory: bool = False
    hidden: tuple = (64, 64)
    seed: int = 0

    def resolve(self, horizon: int) -> "SsrrConfig":
        lo, hi = default_snippet_range(horizon)
        out = SsrrConfig(**asdict(self))
        out.snippet_len_min = lo if self.snippet_len_min is None else self.snippet_len_min
        out.snippet_len_max = hi if self.snippet_len_max is None else self.snippet_len_max
        if not 1 <= out.snippet_len_min <= out.snippet_len_max <= horizon:
            raise ValueError("need 1 <= snippet_len_min <= snippet_len_max <= horizon")
        if self.l2_weight < 0:
            raise ValueError("l2_weight must be non-negative")
        return out

    def to_dict(self):
        return asdict(self)


def snippet_target(length: int, traj_length: int, sigma_value: float) -> float:
    """``(length / traj_length) * sigma``: one correctly rounded division, one multiply."""
    return (length / traj_length) * sigma_value


def sample_snippet_bounds(L, lo, hi, rng):
    """Uniform length in ``[lo, min(hi, L)]``, then a uniform start.

    Trajectories shorter than ``lo`` yield the whole trajectory.
    """
    if L < lo:
        return 0, L
    n = int(rng.integers(lo, min(hi, L) + 1))
    start = int(rng.integers(0, L - n + 1))
    return start, start + n


def sample_snippets(dataset: NoisyDataset, sigma: SigmoidParams, config: SsrrConfig,
                    rng: np.random.Generator, n: Optional[int] = None, horizon=None):
    """Draw snippets with length-scaled sigmoid targets."""
    if horizon is None:
        horizon = max(len(t) for t in dataset.trajectories)
    cfg = config.resolve(horizon) if config.snippet_len_min is None or config.snippet_len_max is None else config
    n = cfg.snippets_per_epoch if n is None else n
    sig = [sigmoid_eval(sigma, t.eta) for t in dataset.trajectories]
    lengths = [len(t) for t in dataset.trajectories]
    if min(lengths) == 0:
        raise ValueError("dataset contains an empty trajectory")
    out = []
    for k in rng.integers(0, len(dataset), size=n):
        k = int(k)
        L = lengths[k]
        if cfg.full_trajectory:
            start, stop = 0, L
        else:
            start, stop = sample_snippet_bounds(L, cfg.snippet_len_min, cfg.snippet_len_max, rng)
        out.append(Snippet(k, start, stop, snippet_target(stop - start, L, sig[k])))
    return out


class _SegmentBatch:
    """Flattened feature rows for a list of ``(traj, start, stop)`` segments."""

    def __init__(self, feats, offsets, segments):
        idx = [np.arange(offsets[t] + a, offsets[t] + b) for t, a, b in segments]
        self.lengths = np.array([len(i) for i in idx])
        self.rows = feats[np.concatenate(idx)]
        self.seg_id = np.repeat(np.arange(len(segments)), self.lengths)

    def sums(self, per_row):
        return np.bincount(self.seg_id, weights=per_row, minlength=len(self.lengths))


def dataset_features(dataset: NoisyDataset, model: RewardModel):
    states = np.concatenate([t.trajectory.step_states() for t in dataset.trajectories])
    actions = np.concatenate([t.actions for t in dataset.trajectories])
    feats = model.inputs(states, actions)
    offsets = np.concatenate([[0], np.cumsum([len(t) for t in dataset.trajectories])])
    return feats, offsets


def _loss_from_rows(model, batch, targets, l2_weight):
    out, cache = model.mlp.forward_cache(batch.rows)
    pred = batch.sums(out[:, 0]) + model.offset * batch.lengths
    diff = pred - targets
    data = float(np.mean(diff**2))
    loss = data + l2_weight * float(model.params @ model.params)
    check_finite(loss, "SSRR loss")
    g_rows = (2.0 * diff / len(diff))[batch.seg_id]
    grad = model.mlp.backward(cache, g_rows[:, None]) + 2.0 * l2_weight * model.params
    return loss, data, grad


def ssrr_loss(model: RewardModel, snippets, dataset: NoisyDataset, l2_weight=0.1):
    """Mean squared snippet-sum error plus ``l2_weight * ||theta||^2``.

    Returns ``(loss, grad)``.
    """
    if not snippets:
        raise ValueError("snippet batch is empty")
    feats, offsets = dataset_features(dataset, model)
    batch = _SegmentBatch(feats, offsets, [(s.traj, s.start, s.stop) for s in snippets])
    loss, _, grad = _loss_from_rows(model, batch, np.array([s.target for s in snippets]), l2_weight)
    return loss, grad


def dataset_digest(dataset: NoisyDataset) -> str:
    return hashlib.sha256(dataset.to_json().encode()).hexdigest()[:16]


def check_provenance(dataset: NoisyDataset, fit: FitReport):
    expected = fit.provenance.get("dataset_digest")
    if expected is not None and expected != dataset_digest(dataset):
        raise ProvenanceError(
            f"sigmoid fit was made on dataset {expected}, not {dataset_digest(dataset)}"
        )


def env_for(dataset: NoisyDataset, env: Optional[Environment]):
    if env is not None:
        return env
    spec = dataset.provenance.get("env", {})
    if "id" not in spec:
        raise ValueError("dataset provenance does not name its environment; pass env")
    return env_from_dict(spec)


def ssrr_train(dataset: NoisyDataset, fit: FitReport, config: SsrrConfig = SsrrConfig(),
               rng: Optional[np.random.Generator] = None, env: Optional[Environment] = None,
               trace: Optional[list] = None) -> RewardModel:
    """Regress ``R(s, a)`` onto length-scaled sigmoid targets.

    ``trace``, when given, receives the mean data loss of every epoch.
    """
    check_dataset(dataset)
    check_provenance(dataset, fit)
    env = env_for(dataset, env)
    cfg = config.resolve(env.horizon)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    model = RewardModel.initialize(env, rng, cfg.hidden, kind="ssrr-reward")
    model.provenance = {"dataset_digest": dataset_digest(dataset), **dataset.provenance}
    feats, offsets = dataset_features(dataset, model)
    opt = Adam(model.params.size, cfg.step_size)
    trace = [] if trace is None else trace
    for epoch in range(cfg.epochs):
        snippets = sample_snippets(dataset, fit.params, cfg, rng)
        epoch_loss = []
        for b in range(0, len(snippets), cfg.batch_size):
            chunk = snippets[b : b + cfg.batch_size]
            batch = _SegmentBatch(feats, offsets, [(s.traj, s.start, s.stop) for s in chunk])
            targets = np.array([s.target for s in chunk])
            _, data, grad = _loss_from_rows(model, batch, targets, cfg.l2_weight)
            model.params = opt.step(model.params, grad)
            epoch_loss.append(data * len(chunk))
        trace.append(float(np.sum(epoch_loss) / len(snippets)))
        logger.debug("ssrr epoch %d: mse %.4f", epoch, trace[-1])
    return model


class SSRR(BaseEstimator):
    """Estimator form of self-supervised reward regression.

    ``fit(dataset)`` fits the noise-performance sigmoid to the dataset's
    cumulative initial rewards and then regresses the per-step reward.
    ``predict(trajectories)`` returns learned trajectory returns.
    """

    def __init__(self, snippet_len_min=None, snippet_len_max=None, snippets_per_epoch=2000,
                 batch_size=64, epochs=50, l2_weight=0.1, step_size=1e-3,
                 full_trajectory=False, hidden=(64, 64), random_state=0):
        self.snippet_len_min = snippet_len_min
        self.snippet_len_max = snippet_len_max
        self.snippets_per_epoch = snippets_per_epoch
        self.batch_size = batch_size
        self.epochs = epochs
        self.l2_weight = l2_weight
        self.step_size = step_size
        self.full_trajectory = full_trajectory
        self.hidden = hidden
        self.random_state = random_state

    def _config(self):
        return SsrrConfig(
            snippet_len_min=self.snippet_len_min, snippet_len_max=self.snippet_len_max,
            snippets_per_epoch=self.snippets_per_epoch, batch_size=self.batch_size,
            epochs=self.epochs, l2_weight=self.l2_weight, step_size=self.step_size,
            full_trajectory=self.full_trajectory,
            hidden=tuple(self.hidden), seed=self.random_state,
        )

    def fit(self, dataset: NoisyDataset, fit_report: Optional[FitReport] = None, env=None):
        from .sigmoid import fit_sigmoid

        if fit_report is None:
            fit_report = fit_sigmoid(dataset.etas, dataset.initial_returns())
        self.fit_report_ = fit_report
        self.loss_trace_ = []
        self.reward_ = ssrr_train(dataset, fit_report, self._config(),
                                  np.random.default_rng(self.random_state), env, self.loss_trace_)
        return self

    def predict(self, trajectories):
        check_is_fitted(self, "reward_")
        return self.reward_.returns(trajectories)
