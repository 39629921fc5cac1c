"""Reward learning from suboptimal demonstrations via noise-performance regression.

The pipeline: suboptimal demonstrations -> AIRL or Noisy-AIRL (initial reward
and generator) -> noise-injected rollouts -> sigmoid noise-performance fit ->
per-step reward regression -> policy training.  A pairwise-ranking baseline
(D-REX) and ground-truth evaluation tools are included.
"""

from importlib.metadata import PackageNotFoundError, version as _version

from .airl import AIRL, AirlConfig, AirlTrainer, airl_disc_loss, airl_train, noisy_airl_disc_loss
from .demos import DemoSet, generate_demos
from .drex import DREX, DrexConfig, build_pairs, drex_loss, drex_train, middle_return_oracle
from .envs import (
    GridNav,
    GroundTruthEvaluator,
    PointReach,
    Trajectory,
    ground_truth_return,
    make_env,
    reset,
    rollout,
    rollout_batch,
    step,
)
from .evaluation import (
    EvalReport,
    TrajectorySpectrum,
    checkpoint_spectrum,
    correlation_report,
    pearson,
    performance_ratio,
    policy_eval,
    ranking_accuracy,
)
from .exceptions import DimensionError, InvalidActionError, NonFiniteError, ProvenanceError
from .nn import Adam, Mlp, optimize_step
from .noise import NoisyDataset, NoisyPolicy, NoisyTrajectory, default_noise_grid, synthesize_dataset
from .policies import (
    BcConfig,
    BehavioralCloning,
    CategoricalPolicy,
    GaussianPolicy,
    RlConfig,
    bc_train,
    pg_train,
)
from .rewards import RewardModel
from .sigmoid import FitReport, SigmoidParams, SigmoidRegressor, fit_sigmoid, ordinal_baseline_r2, sigmoid_eval
from .ssrr import SSRR, SsrrConfig, sample_snippets, ssrr_loss, ssrr_train

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

__all__ = [
    "AIRL", "Adam", "AirlConfig", "AirlTrainer", "BcConfig", "BehavioralCloning",
    "CategoricalPolicy", "DREX", "DemoSet", "DimensionError", "DrexConfig", "EvalReport",
    "FitReport", "GaussianPolicy", "GridNav", "GroundTruthEvaluator", "InvalidActionError",
    "Mlp", "NoisyDataset", "NoisyPolicy", "NoisyTrajectory", "NonFiniteError", "PointReach",
    "ProvenanceError", "RewardModel", "RlConfig", "SSRR", "SigmoidParams", "SigmoidRegressor",
    "SsrrConfig", "Trajectory", "TrajectorySpectrum", "airl_disc_loss", "airl_train",
    "bc_train", "build_pairs", "checkpoint_spectrum", "correlation_report", "default_noise_grid",
    "drex_loss", "drex_train", "fit_sigmoid", "generate_demos", "ground_truth_return",
    "make_env", "noisy_airl_disc_loss", "optimize_step", "ordinal_baseline_r2", "pearson",
    "performance_ratio", "pg_train", "policy_eval", "ranking_accuracy", "reset", "rollout",
    "rollout_batch", "sample_snippets", "sigmoid_eval", "ssrr_loss", "ssrr_train", "step",
    "synthesize_dataset", "middle_return_oracle",
]
