import numpy as np
import pytest
from hypothesis import given, strategies as st

from subopt_lfd.envs import GridNav, PointReach, Trajectory
from subopt_lfd.noise import (
    NoisyDataset,
    NoisyPolicy,
    NoisyTrajectory,
    default_noise_grid,
    sample_noisy_action,
    synthesize_dataset,
)
from subopt_lfd.policies import CategoricalPolicy, GaussianPolicy
from subopt_lfd.rewards import RewardModel

N = 40000


def _freqs(noisy, rng):
    states = np.zeros((N, 2), dtype=int)
    return np.bincount(noisy.sample(states, rng), minlength=4) / N


def test_full_noise_is_uniform(grid):
    base = CategoricalPolicy.tabular(grid, [50.0, 0, 0, 0])
    f = _freqs(NoisyPolicy(base, 1.0, grid), np.random.default_rng(0))
    np.testing.assert_allclose(f, 0.25, atol=0.01)


def test_half_noise_around_point_mass(grid):
    base = CategoricalPolicy.tabular(grid, [0, 0, 800.0, 0])
    f = _freqs(NoisyPolicy(base, 0.5, grid), np.random.default_rng(1))
    assert f[2] == pytest.approx(0.625, abs=0.01)


def test_zero_noise_reproduces_base_stream(grid):
    base = CategoricalPolicy.tabular(grid, [0.3, 0.1, -0.2, 0.5])
    states = np.random.default_rng(0).integers(0, 8, size=(500, 2))
    a = NoisyPolicy(base, 0.0, grid).sample(states, np.random.default_rng(7))
    b = base.sample(states, np.random.default_rng(7))
    np.testing.assert_array_equal(a, b)
    single = sample_noisy_action(NoisyPolicy(base, 0.0, grid), states[0], np.random.default_rng(7))
    assert single == b[0]


def test_continuous_noise_stays_in_box(point):
    base = GaussianPolicy.initialize(point, np.random.default_rng(0), (4,))
    acts = NoisyPolicy(base, 1.0, point).sample(np.zeros((2000, 4)), np.random.default_rng(1))
    assert np.all(np.abs(acts) <= 1.0)
    lp = NoisyPolicy(base, 0.3, point).log_prob(np.zeros((5, 4)), acts[:5])
    assert np.all(np.isfinite(lp))


@given(st.floats(0, 1), st.integers(0, 2**31 - 1))
def test_mixture_probs_sum_to_one(eta, seed):
    env = GridNav()
    base = CategoricalPolicy.tabular(env, np.random.default_rng(seed).normal(scale=5, size=4))
    p = NoisyPolicy(base, eta, env).probs(np.array([[0, 0], [3, 3]]))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_invalid_eta_rejected(grid):
    with pytest.raises(ValueError):
        NoisyPolicy(CategoricalPolicy.tabular(grid), 1.2, grid)


def test_default_grid():
    g = default_noise_grid()
    assert len(g) == 20 and g[0] == 0.0 and g[-1] == 1.0


def _reward(env, seed=0):
    return RewardModel.initialize(env, np.random.default_rng(seed), (8,))


def test_dataset_size_and_stored_rewards(grid):
    pol = CategoricalPolicy.tabular(grid, [2.0, 0, 2.0, 0])
    reward = _reward(grid)
    ds = synthesize_dataset(reward, pol, grid, default_noise_grid(), 5, np.random.default_rng(0))
    assert len(ds) == 100
    for t in ds.trajectories:
        np.testing.assert_array_equal(reward(t.trajectory.step_states(), t.actions), t.initial_rewards)
    assert set(ds.etas) <= set(ds.noise_grid)


def test_noise_degrades_return(grid):
    pol = CategoricalPolicy.tabular(grid, [3.0, -3.0, 3.0, -3.0])
    ds = synthesize_dataset(_reward(grid), pol, grid, [0.0, 1.0], 20, np.random.default_rng(0))
    gt = np.array([grid.evaluator().trajectory_return(t.trajectory) for t in ds.trajectories])
    assert gt[ds.etas == 0.0].mean() >= gt[ds.etas == 1.0].mean()


def test_dataset_bytes_deterministic(point):
    pol = GaussianPolicy.initialize(point, np.random.default_rng(0), (4,))
    env = PointReach(horizon=10)
    make = lambda: synthesize_dataset(_reward(env), pol, env, [0.0, 0.5, 1.0], 2,
                                      np.random.default_rng(3), {"generator": "bc"}).to_json()
    assert make() == make()


def test_dataset_json_roundtrip(grid_dataset):
    back = NoisyDataset.from_json(grid_dataset.to_json())
    assert back.to_json() == grid_dataset.to_json()
    np.testing.assert_array_equal(back.initial_returns(), grid_dataset.initial_returns())


def test_dataset_rejects_off_grid_level(grid):
    t = Trajectory(np.array([[0, 0], [1, 0]]), np.array([0]))
    with pytest.raises(ValueError):
        NoisyDataset([NoisyTrajectory(0.3, t, [1.0])], [0.0, 1.0])
    with pytest.raises(ValueError):
        NoisyTrajectory(0.0, t, [1.0, 2.0])


def test_synthesis_argument_checks(grid):
    pol = CategoricalPolicy.tabular(grid)
    with pytest.raises(ValueError):
        synthesize_dataset(_reward(grid), pol, grid, [0.0], 0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        synthesize_dataset(_reward(grid), pol, grid, [1.5], 1, np.random.default_rng(0))
