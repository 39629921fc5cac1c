import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from subopt_lfd.envs import PointReach
from subopt_lfd.exceptions import ProvenanceError
from subopt_lfd.rewards import RewardModel
from subopt_lfd.sigmoid import SigmoidParams, fit_sigmoid, sigmoid_eval
from subopt_lfd.ssrr import (
    SSRR,
    Snippet,
    SsrrConfig,
    dataset_digest,
    default_snippet_range,
    sample_snippet_bounds,
    sample_snippets,
    snippet_target,
    ssrr_loss,
    ssrr_train,
)

from helpers import constant_reward, fd_gradient, max_rel_error, random_dataset

SIGMA = SigmoidParams(c=-20.0, k=8.0, x0=0.5, y0=5.0)


def _fit_for(dataset):
    rep = fit_sigmoid(dataset.etas, dataset.initial_returns())
    rep.provenance = {"dataset_digest": dataset_digest(dataset)}
    return rep


def test_full_length_target_is_sigma():
    assert snippet_target(37, 37, 12.345) == 12.345


def test_half_length_target():
    assert snippet_target(50, 100, 8.0) == 4.0


def test_default_snippet_range():
    assert default_snippet_range(100) == (5, 50)
    assert default_snippet_range(16) == (2, 8)
    lo, hi = default_snippet_range(3)
    assert 1 <= lo <= hi


def test_short_trajectory_falls_back_to_full_length():
    assert sample_snippet_bounds(3, 5, 10, np.random.default_rng(0)) == (0, 3)


@settings(max_examples=20)
@given(st.integers(1, 60), st.integers(1, 60), st.integers(0, 2**31 - 1))
def test_snippet_bounds_valid(L, lo, seed):
    hi = lo + 5
    a, b = sample_snippet_bounds(L, lo, hi, np.random.default_rng(seed))
    assert 0 <= a < b <= L
    if L >= lo:
        assert lo <= b - a <= min(hi, L)


def test_sampled_targets_satisfy_identity(point_dataset):
    snips = sample_snippets(point_dataset, SIGMA, SsrrConfig(), np.random.default_rng(0), n=2000)
    for s in snips:
        t = point_dataset.trajectories[s.traj]
        assert s.target == (s.length / len(t)) * sigmoid_eval(SIGMA, t.eta)


def test_per_step_target_constant_across_lengths(point_dataset):
    snips = sample_snippets(point_dataset, SIGMA, SsrrConfig(), np.random.default_rng(1), n=500)
    by_traj = {}
    for s in snips:
        by_traj.setdefault(s.traj, []).append(s.target / s.length)
    for per_step in by_traj.values():
        np.testing.assert_allclose(per_step, per_step[0], rtol=1e-12)


def test_full_trajectory_mode(grid_dataset):
    snips = sample_snippets(grid_dataset, SIGMA, SsrrConfig(full_trajectory=True), np.random.default_rng(0), n=20)
    for s in snips:
        assert (s.start, s.stop) == (0, len(grid_dataset.trajectories[s.traj]))


def test_config_validation():
    with pytest.raises(ValueError):
        SsrrConfig(snippet_len_min=10, snippet_len_max=5).resolve(100)
    with pytest.raises(ValueError):
        SsrrConfig(l2_weight=-1.0).resolve(100)


def test_loss_single_snippet_hand_value(grid_dataset, small_grid):
    L = len(grid_dataset.trajectories[0])
    model = constant_reward(small_grid, 3.0 / L)
    loss, _ = ssrr_loss(model, [Snippet(0, 0, L, 5.0)], grid_dataset, l2_weight=0.0)
    assert loss == pytest.approx(4.0, abs=1e-12)


def test_perfect_prediction_leaves_only_l2(point_dataset):
    env = PointReach(horizon=12)
    model = constant_reward(env, 0.25)
    snips = [Snippet(k, 1, 4, 0.75) for k in range(4)]
    loss, _ = ssrr_loss(model, snips, point_dataset, l2_weight=0.3)
    assert loss == pytest.approx(0.3 * float(model.params @ model.params), abs=1e-12)


def test_empty_batch_raises(grid_dataset, small_grid):
    with pytest.raises(ValueError):
        ssrr_loss(constant_reward(small_grid, 0.0), [], grid_dataset)


@pytest.mark.parametrize("which", ["grid", "point"])
def test_gradient_matches_fd(which, grid_dataset, point_dataset, small_grid):
    ds, env = (grid_dataset, small_grid) if which == "grid" else (point_dataset, PointReach(horizon=12))
    rng = np.random.default_rng(0)
    model = RewardModel.initialize(env, rng, (6,))
    snips = sample_snippets(ds, SIGMA, SsrrConfig(), rng, n=8)

    def f(theta):
        m = model.copy()
        m.params = theta
        return ssrr_loss(m, snips, ds, 0.1)[0]

    assert max_rel_error(ssrr_loss(model, snips, ds, 0.1)[1], fd_gradient(f, model.params)) <= 1e-4


def test_training_deterministic_and_non_worsening(small_grid):
    ds = random_dataset(small_grid, levels=(0.0, 0.25, 0.5, 0.75, 1.0), per_level=4)
    cfg = SsrrConfig(epochs=8, snippets_per_epoch=128, hidden=(16,), seed=3)
    trace = []
    a = ssrr_train(ds, _fit_for(ds), cfg, trace=trace)
    b = ssrr_train(ds, _fit_for(ds), cfg)
    np.testing.assert_array_equal(a.params, b.params)
    assert trace[-1] <= trace[0]
    assert a.kind == "ssrr-reward" and a.provenance["dataset_digest"] == dataset_digest(ds)


def test_provenance_mismatch(grid_dataset, small_grid):
    rep = _fit_for(grid_dataset)
    rep.provenance["dataset_digest"] = "0" * 16
    with pytest.raises(ProvenanceError):
        ssrr_train(grid_dataset, rep, SsrrConfig(epochs=1))


def test_env_inferred_from_provenance(grid_dataset):
    model = ssrr_train(grid_dataset, _fit_for(grid_dataset), SsrrConfig(epochs=1, snippets_per_epoch=8, hidden=(4,)))
    assert model.env.to_dict() == grid_dataset.provenance["env"]


def test_estimator(grid_dataset):
    est = SSRR(epochs=2, snippets_per_epoch=32, hidden=(8,))
    assert clone(est).get_params()["epochs"] == 2
    est.fit(grid_dataset)
    trajs = [t.trajectory for t in grid_dataset.trajectories]
    assert est.predict(trajs).shape == (len(trajs),)
    assert len(est.loss_trace_) == 2
