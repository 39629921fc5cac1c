"""Suboptimal demonstrations from partially trained policies.

The demonstrator is trained on the ground-truth reward, so this module sits
on the evaluation side of the no-peeking boundary: learners only ever see
the trajectories it returns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envs import Environment, GridNav, rollout_batch
from .evaluation import performance_ratio, policy_eval
from .policies import RlConfig, pg_train


@dataclass
class DemoSet:
    trajectories: list
    returns: list
    checkpoint: int
    reference_return: float
    info: dict = field(default_factory=dict)

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns))


def generate_demos(env: Environment, n_demos=5, target_fraction=0.4,
                   config: Optional[RlConfig] = None, seed=0) -> DemoSet:
    """Demonstrations from the first checkpoint that reaches ``target_fraction`` of optimal.

    Every training iteration is a candidate checkpoint.  For each one the
    same demo random stream is replayed and the resulting demo set is
    accepted once its mean return is at least ``target_fraction`` of the
    reference (optimal) return, measured with :func:`performance_ratio`.
    GridNav's reference is its exact optimum; elsewhere it is the fully
    trained policy's mean return.
    """
    evaluator = env.evaluator()
    config = config or RlConfig(seed=seed, iterations=200 if env.is_discrete else 400,
                                entropy_weight=0.01 if env.is_discrete else 0.0)
    rng = np.random.default_rng(seed)
    checkpoints = []
    best = pg_train(env, evaluator, config, rng, callback=lambda it, p: checkpoints.append(p.copy()))
    if isinstance(env, GridNav):
        reference = env.optimal_return()
    else:
        reference = policy_eval(best, env, 100, np.random.default_rng([seed, 7]))[0]
    demo_seed = [seed, 11]
    for i, policy in enumerate(checkpoints):
        trajs = rollout_batch(env, policy.sample, n_demos, np.random.default_rng(demo_seed))
        returns = [evaluator.trajectory_return(t) for t in trajs]
        if performance_ratio(float(np.mean(returns)), reference) >= target_fraction:
            return DemoSet(trajs, returns, i, reference, {"seed": seed, "target_fraction": target_fraction})
    raise RuntimeError("no checkpoint reached the requested demonstration quality")
