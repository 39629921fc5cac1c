"""Stage runner and comparison-grid pipeline.

Every stage reads its inputs from JSON artifacts, writes its outputs with a
provenance header ``{stage, seed, config_hash, version, env, inputs}`` and
draws randomness from a named sub-stream of the root seed, so reruns with
the same config and seed are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .airl import AirlConfig, AirlTrainer
from .demos import generate_demos
from .drex import DrexConfig, drex_train
from .envs import Environment, Trajectory, make_env
from .evaluation import (
    EvalReport,
    TrajectorySpectrum,
    checkpoint_spectrum,
    correlation_csv,
    learned_returns,
    noise_curve_csv,
    noise_spectrum,
    pearson,
    performance_ratio,
    policy_eval,
    ranking_accuracy,
)
from .noise import NoisyDataset, default_noise_grid, synthesize_dataset
from .policies import BcConfig, RlConfig, bc_train, pg_train, policy_from_dict
from .rewards import RewardModel
from .sigmoid import FitReport, fit_sigmoid, level_means, sigmoid_eval
from .ssrr import SsrrConfig, dataset_digest, ssrr_train

logger = logging.getLogger(__name__)

STAGES = ("demo-gen", "bc", "airl", "noise-gen", "fit", "ssrr", "drex", "rl", "eval")
GENERATORS = ("bc", "airl", "noisy-airl")
LEARNERS = ("ssrr", "drex")

TABLE1_HEADER = [
    "generator", "learner", "n_ok", "n_failed",
    "pearson_test_mean", "pearson_test_std", "pearson_train_mean", "pearson_train_std",
    "pearson_pooled_mean", "pearson_pooled_std", "ranking_accuracy_mean", "ranking_accuracy_std",
]
TABLE2_HEADER = [
    "generator", "learner", "n_ok", "n_failed", "demo_return_mean", "policy_return_mean",
    "policy_return_std", "improvement_ratio_mean", "percentage",
]
CELLS_HEADER = [
    "generator", "learner", "seed", "status", "pearson_train", "pearson_test", "pearson_pooled",
    "ranking_accuracy", "demo_mean_return", "policy_mean_return", "improvement_ratio", "error",
]


class ConfigError(ValueError):
    """The configuration file is missing, malformed or fails validation."""


class InputError(ValueError):
    """A stage input artifact is missing or fails validation."""


# -- configuration ---------------------------------------------------------------


@dataclass
class PipelineConfig:
    """Everything a run needs; nested sections are keyword dicts for the module configs.

    ``generator``/``learner`` select the branch for single-stage runs;
    ``generators``/``learners`` span the grid for :func:`run_pipeline`.
    Seeds given inside nested sections are ignored: each stage derives its
    own from the root seed.
    """

    env: dict = field(default_factory=lambda: {"id": "gridnav"})
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    generator: str = "noisy-airl"
    learner: str = "ssrr"
    generators: list = field(default_factory=lambda: list(GENERATORS))
    learners: list = field(default_factory=lambda: list(LEARNERS))
    demos: dict = field(default_factory=dict)
    bc: dict = field(default_factory=dict)
    airl: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    ssrr: dict = field(default_factory=dict)
    drex: dict = field(default_factory=dict)
    rl: dict = field(default_factory=dict)
    spectrum: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    out: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            self.make_env()
        except (TypeError, ValueError, KeyError) as e:
            raise ConfigError(f"env: {e}") from None
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds: need a non-empty list of non-negative integers")
        for name, allowed in (("generator", GENERATORS), ("learner", LEARNERS)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name}: must be one of {', '.join(allowed)}")
        for name, allowed in (("generators", GENERATORS), ("learners", LEARNERS)):
            values = getattr(self, name)
            if not values or any(v not in allowed for v in values) or len(set(values)) != len(values):
                raise ConfigError(f"{name}: need distinct values from {', '.join(allowed)}")
        unknown = set(self.demos) - {"n_demos", "target_fraction", "rl"}
        if unknown:
            raise ConfigError(f"demos: unknown keys {sorted(unknown)}")
        unknown = set(self.noise) - {"levels", "episodes_per_level"}
        if unknown:
            raise ConfigError(f"noise: unknown keys {sorted(unknown)}")
        if int(self.noise.get("levels", 20)) < 2 or int(self.noise.get("episodes_per_level", 5)) < 1:
            raise ConfigError("noise: need levels >= 2 and episodes_per_level >= 1")
        unknown = set(self.spectrum) - {"n_trajectories", "checkpoint_every", "seed"}
        if unknown:
            raise ConfigError(f"spectrum: unknown keys {sorted(unknown)}")
        spec = self.spectrum_settings()
        if int(spec["n_trajectories"]) < 10 or int(spec["checkpoint_every"]) < 1:
            raise ConfigError("spectrum: need n_trajectories >= 10 and checkpoint_every >= 1")
        unknown = set(self.eval) - {"episodes"}
        if unknown:
            raise ConfigError(f"eval: unknown keys {sorted(unknown)}")
        for section, build in (("bc", self.bc_config), ("airl", self.airl_config),
                               ("airl", lambda seed: self.airl_config(seed, noisy=True)),
                               ("ssrr", self.ssrr_config), ("drex", self.drex_config),
                               ("rl", self.rl_config)):
            try:
                build(0)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"{section}: {e}") from None

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"{path}: config file not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from None
        return cls.from_dict(d)

    def to_dict(self):
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of the canonical JSON form, excluding the output directory."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def make_env(self) -> Environment:
        spec = {k: tuple(v) if isinstance(v, list) else v for k, v in self.env.items()}
        return make_env(spec.pop("id"), **spec)

    # Module configs.  Defaults that depend on the action space are filled here.

    def bc_config(self, seed: int) -> BcConfig:
        return BcConfig(**{**self.bc, "seed": seed, "hidden": tuple(self.bc.get("hidden", (64, 64)))})

    def airl_config(self, seed: int, noisy=False) -> AirlConfig:
        d = {**self.airl, "seed": seed, "noisy": noisy}
        d["hidden"] = tuple(d.get("hidden", (64, 64)))
        if not noisy:
            d.pop("noise_schedule", None)
        return AirlConfig(**d)

    def ssrr_config(self, seed: int) -> SsrrConfig:
        d = {**self.ssrr, "seed": seed}
        d["hidden"] = tuple(d.get("hidden", (64, 64)))
        return SsrrConfig(**d)

    def drex_config(self, seed: int) -> DrexConfig:
        d = {**self.drex, "seed": seed}
        d["hidden"] = tuple(d.get("hidden", (64, 64)))
        return DrexConfig(**d)

    def rl_config(self, seed: int, section: Optional[dict] = None) -> RlConfig:
        env = self.make_env()
        d = {
            "iterations": 300 if env.is_discrete else 400,
            "entropy_weight": 0.01 if env.is_discrete else 0.0,
            "baseline": "time" if env.is_discrete else "value",
            **(self.rl if section is None else section),
            "seed": seed,
        }
        d["hidden"] = tuple(d.get("hidden", (64, 64)))
        return RlConfig(**d)

    def demo_rl_config(self, seed: int) -> RlConfig:
        env = self.make_env()
        section = {
            "iterations": 200 if env.is_discrete else 400,
            "entropy_weight": 0.01 if env.is_discrete else 0.0,
            "baseline": "time",
            **self.demos.get("rl", {}),
        }
        return self.rl_config(seed, section)

    def noise_grid(self):
        return default_noise_grid(int(self.noise.get("levels", 20)))

    def spectrum_settings(self):
        return {"n_trajectories": 50, "checkpoint_every": 10, "seed": 1000, **self.spectrum}


def stream_seed(seed: int, name: str) -> int:
    """Seed of the named sub-stream of a root seed."""
    ss = np.random.SeedSequence([seed, zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def stage_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(seed, name))


def version_string() -> str:
    from . import __version__

    return f"v{__version__}"


# -- artifact IO -----------------------------------------------------------------


@dataclass
class Layout:
    """Where each artifact lives.  Single-stage runs put everything in one directory."""

    root: Path
    seed_dir: Path
    airl_dir: Path
    gen_dir: Path
    learner_dir: Path

    @classmethod
    def flat(cls, out) -> "Layout":
        out = Path(out)
        return cls(out, out, out, out, out)

    @classmethod
    def nested(cls, out, seed: int, generator: str, learner: str) -> "Layout":
        out = Path(out)
        seed_dir = out / f"seed{seed}"
        airl_dir = seed_dir / ("noisy-airl" if generator == "noisy-airl" else "airl")
        gen_dir = seed_dir / generator
        return cls(out, seed_dir, airl_dir, gen_dir, gen_dir / learner)

    def demos(self):
        return self.seed_dir / "demos.json"

    def bc_policy(self):
        return self.seed_dir / "bc_policy.json"

    def airl_reward(self):
        return self.airl_dir / "airl_reward.json"

    def airl_policy(self):
        return self.airl_dir / "airl_policy.json"

    def airl_metrics(self):
        return self.airl_dir / "airl_metrics.csv"

    def dataset(self):
        return self.gen_dir / "dataset.json"

    def fit(self):
        return self.gen_dir / "fit.json"

    def fit_curve(self):
        return self.gen_dir / "fit_curve.csv"

    def reward(self, learner):
        return self.learner_dir / f"{learner}_reward.json"

    def policy(self, learner):
        return self.learner_dir / f"{learner}_policy.json"

    def eval_report(self, learner):
        return self.learner_dir / f"{learner}_eval.json"

    def correlation(self, learner):
        return self.learner_dir / f"{learner}_correlation.csv"

    def noise_curve(self, learner):
        return self.learner_dir / f"{learner}_noise_curve.csv"


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def provenance(cfg: PipelineConfig, stage: str, seed: int, inputs=()) -> dict:
    return {
        "stage": stage,
        "seed": seed,
        "config_hash": cfg.config_hash(),
        "version": version_string(),
        "env": cfg.env,
        "inputs": {Path(p).name: file_digest(p) for p in inputs},
    }


def write_json(path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    return path


def write_csv(path, prov: dict, text: str):
    """CSV preceded by one ``# provenance: {...}`` comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("# provenance: " + json.dumps(prov, sort_keys=True) + "\n" + text)
    return path


def read_json(path, what: str, cfg: Optional[PipelineConfig] = None) -> dict:
    """Load an input artifact; errors name the file and the failed check."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: missing input ({what})")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: {what} is not valid JSON ({e})") from None
    if not isinstance(d, dict) or "provenance" not in d:
        raise InputError(f"{path}: {what} has no provenance header")
    if cfg is not None and d["provenance"].get("env") not in (None, cfg.env):
        raise InputError(f"{path}: {what} was produced for env {d['provenance']['env']}, "
                         f"config says {cfg.env}")
    return d


def _parse(path, what, build):
    try:
        return build()
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{path}: invalid {what} ({e})") from None


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v):
    if v is None:
        return ""
    return repr(float(v))


# -- stages ----------------------------------------------------------------------


def load_demos(cfg, layout):
    path = layout.demos()
    d = read_json(path, "demonstrations", cfg)
    trajs = _parse(path, "demonstrations", lambda: [Trajectory.from_dict(t) for t in d["trajectories"]])
    if not trajs:
        raise InputError(f"{path}: demonstrations must contain at least one trajectory")
    return d, trajs


def load_policy(cfg, path, what):
    env = cfg.make_env()
    d = read_json(path, what, cfg)
    return _parse(path, what, lambda: policy_from_dict(d["policy"], env))


def load_reward(cfg, path, what):
    env = cfg.make_env()
    d = read_json(path, what, cfg)
    return _parse(path, what, lambda: RewardModel.from_dict(d["reward"], env))


def load_dataset(cfg, layout):
    path = layout.dataset()
    d = read_json(path, "noisy dataset", cfg)
    return _parse(path, "noisy dataset", lambda: NoisyDataset.from_dict(d["dataset"]))


def load_fit(cfg, layout, dataset):
    path = layout.fit()
    d = read_json(path, "sigmoid fit", cfg)
    fit = _parse(path, "sigmoid fit", lambda: FitReport.from_dict(d["fit"]))
    if fit.provenance.get("dataset_digest") != dataset_digest(dataset):
        raise InputError(f"{path}: sigmoid fit was made on a different dataset than "
                         f"{layout.dataset()}")
    return fit


def stage_demo_gen(cfg, seed, layout):
    env = cfg.make_env()
    demo_seed = stream_seed(seed, "demo-gen") % 2**31
    ds = generate_demos(env, int(cfg.demos.get("n_demos", 5)),
                        float(cfg.demos.get("target_fraction", 0.4)),
                        cfg.demo_rl_config(demo_seed), demo_seed)
    payload = {
        "provenance": provenance(cfg, "demo-gen", seed),
        "trajectories": [t.to_dict() for t in ds.trajectories],
        "returns": [float(r) for r in ds.returns],
        "checkpoint": ds.checkpoint,
        "reference_return": float(ds.reference_return),
    }
    return [write_json(layout.demos(), payload)]


def stage_bc(cfg, seed, layout):
    _, demos = load_demos(cfg, layout)
    policy = bc_train(demos, cfg.make_env(), cfg.bc_config(stream_seed(seed, "bc") % 2**31))
    payload = {"provenance": provenance(cfg, "bc", seed, [layout.demos()]), "policy": policy.to_dict()}
    return [write_json(layout.bc_policy(), payload)]


def stage_airl(cfg, seed, layout, noisy: Optional[bool] = None):
    noisy = cfg.generator == "noisy-airl" if noisy is None else noisy
    name = "noisy-airl" if noisy else "airl"
    env = cfg.make_env()
    _, demos = load_demos(cfg, layout)
    rng = stage_rng(seed, name)
    trainer = AirlTrainer(env, cfg.airl_config(stream_seed(seed, name) % 2**31, noisy),
                          env.evaluator())
    reward, policy = trainer.train(demos, rng)
    prov = {**provenance(cfg, "airl", seed, [layout.demos()]), "variant": name}
    rows = [[r["step"], _num(r["disc_loss"]), _num(r["mean_pseudo_return"]),
             _num(r.get("mean_gt_return"))] for r in trainer.history_]
    return [
        write_json(layout.airl_reward(), {"provenance": prov, "reward": reward.to_dict()}),
        write_json(layout.airl_policy(), {"provenance": prov, "policy": policy.to_dict()}),
        write_csv(layout.airl_metrics(), prov,
                  _csv_text(["step", "disc_loss", "mean_pseudo_return", "mean_gt_return"], rows)),
    ]


def stage_noise_gen(cfg, seed, layout):
    env = cfg.make_env()
    reward = load_reward(cfg, layout.airl_reward(), "initial reward")
    policy_path = layout.bc_policy() if cfg.generator == "bc" else layout.airl_policy()
    policy = load_policy(cfg, policy_path, "generator policy")
    inputs = [layout.airl_reward(), policy_path]
    prov = {**provenance(cfg, "noise-gen", seed, inputs), "generator": cfg.generator}
    ds = synthesize_dataset(reward, policy, env, cfg.noise_grid(),
                            int(cfg.noise.get("episodes_per_level", 5)), stage_rng(seed, "noise-gen"),
                            {"env": env.to_dict(), "generator": cfg.generator, "seed": seed})
    return [write_json(layout.dataset(), {"provenance": prov, "dataset": ds.to_dict()})]


def stage_fit(cfg, seed, layout):
    dataset = load_dataset(cfg, layout)
    fit = fit_sigmoid(dataset.etas, dataset.initial_returns())
    fit.provenance["dataset_digest"] = dataset_digest(dataset)
    prov = provenance(cfg, "fit", seed, [layout.dataset()])
    levels, means = level_means(dataset.etas, dataset.initial_returns())
    rows = [[_num(e), _num(m), _num(sigmoid_eval(fit.params, e))] for e, m in zip(levels, means)]
    return [
        write_json(layout.fit(), {"provenance": prov, "fit": fit.to_dict()}),
        write_csv(layout.fit_curve(), prov,
                  _csv_text(["eta", "mean_initial_return", "sigmoid_fit"], rows)),
    ]


def stage_ssrr(cfg, seed, layout):
    env = cfg.make_env()
    dataset = load_dataset(cfg, layout)
    fit = load_fit(cfg, layout, dataset)
    model = ssrr_train(dataset, fit, cfg.ssrr_config(stream_seed(seed, "ssrr") % 2**31),
                       stage_rng(seed, "ssrr"), env)
    prov = provenance(cfg, "ssrr", seed, [layout.dataset(), layout.fit()])
    return [write_json(layout.reward("ssrr"), {"provenance": prov, "reward": model.to_dict()})]


def stage_drex(cfg, seed, layout):
    env = cfg.make_env()
    dataset = load_dataset(cfg, layout)
    model = drex_train(dataset, cfg.drex_config(stream_seed(seed, "drex") % 2**31),
                       stage_rng(seed, "drex"), env)
    prov = provenance(cfg, "drex", seed, [layout.dataset()])
    return [write_json(layout.reward("drex"), {"provenance": prov, "reward": model.to_dict()})]


def stage_rl(cfg, seed, layout, learner: Optional[str] = None):
    learner = learner or cfg.learner
    env = cfg.make_env()
    reward = load_reward(cfg, layout.reward(learner), f"{learner} reward")
    dataset = load_dataset(cfg, layout)
    shifted = reward.shifted_to_max(t.trajectory for t in dataset.trajectories)
    name = f"rl-{learner}"
    policy = pg_train(env, shifted, cfg.rl_config(stream_seed(seed, name) % 2**31),
                      stage_rng(seed, name))
    prov = provenance(cfg, "rl", seed, [layout.reward(learner), layout.dataset()])
    return [write_json(layout.policy(learner), {"provenance": prov, "policy": policy.to_dict()})]


_SPECTRA: dict = {}


def heldout_spectrum(cfg) -> TrajectorySpectrum:
    """Held-out checkpoint spectrum for ``cfg``'s environment (cached per settings)."""
    s = cfg.spectrum_settings()
    key = json.dumps([cfg.env, s], sort_keys=True)
    if key not in _SPECTRA:
        _SPECTRA[key] = checkpoint_spectrum(cfg.make_env(), int(s["n_trajectories"]),
                                            int(s["checkpoint_every"]), seed=int(s["seed"]))
    return _SPECTRA[key]


def train_spectrum(dataset, env, layout) -> TrajectorySpectrum:
    try:
        return noise_spectrum(dataset, env)
    except ValueError as e:
        raise InputError(f"{layout.dataset()}: cannot serve as a training spectrum ({e})") from None


def evaluate_cell(cfg, seed, layout, learner: Optional[str] = None) -> EvalReport:
    learner = learner or cfg.learner
    env = cfg.make_env()
    reward = load_reward(cfg, layout.reward(learner), f"{learner} reward")
    dataset = load_dataset(cfg, layout)
    demo_d, demos = load_demos(cfg, layout)
    evaluator = env.evaluator()
    train = train_spectrum(dataset, env, layout)
    test = heldout_spectrum(cfg)
    lr_train, lr_test = learned_returns(reward, train.trajectories), learned_returns(reward, test.trajectories)
    report = EvalReport(
        pearson_train=pearson(lr_train, train.returns),
        pearson_test=pearson(lr_test, test.returns),
        pearson_pooled=pearson(np.concatenate([lr_train, lr_test]),
                               np.concatenate([train.returns, test.returns])),
        ranking_accuracy=ranking_accuracy(reward, dataset),
        demo_mean_return=float(np.mean([evaluator.trajectory_return(t) for t in demos])),
    )
    if layout.policy(learner).is_file():
        policy = load_policy(cfg, layout.policy(learner), f"{learner} policy")
        mean, std = policy_eval(policy, env, int(cfg.eval.get("episodes", 100)),
                                stage_rng(seed, f"eval-{learner}"))
        report.policy_mean_return, report.policy_std_return = mean, std
        try:
            report.improvement_ratio = performance_ratio(mean, report.demo_mean_return)
        except ValueError:
            report.improvement_ratio = None
    return report


def stage_eval(cfg, seed, layout, learner: Optional[str] = None):
    learner = learner or cfg.learner
    report = evaluate_cell(cfg, seed, layout, learner)
    env = cfg.make_env()
    evaluator = env.evaluator()
    reward = load_reward(cfg, layout.reward(learner), f"{learner} reward")
    dataset = load_dataset(cfg, layout)
    _, demos = load_demos(cfg, layout)
    inputs = [layout.reward(learner), layout.dataset(), layout.demos()]
    if layout.policy(learner).is_file():
        inputs.append(layout.policy(learner))
    prov = {**provenance(cfg, "eval", seed, inputs), "learner": learner,
            "spectrum": cfg.spectrum_settings()}
    test = heldout_spectrum(cfg)
    train = train_spectrum(dataset, env, layout)
    demo_gt = [evaluator.trajectory_return(t) for t in demos]
    splits = {
        "demo": (demo_gt, learned_returns(reward, demos)),
        "train": (train.returns, learned_returns(reward, train.trajectories)),
        "test": (test.returns, learned_returns(reward, test.trajectories)),
    }
    gt_fit = fit_sigmoid(dataset.etas, train.returns)
    return [
        write_json(layout.eval_report(learner), {"provenance": prov, "report": report.to_dict()}),
        write_csv(layout.correlation(learner), prov, correlation_csv(splits)),
        write_csv(layout.noise_curve(learner), prov,
                  noise_curve_csv(dataset.etas, train.returns, gt_fit.params)),
    ]


STAGE_FUNCS = {
    "demo-gen": stage_demo_gen,
    "bc": stage_bc,
    "airl": stage_airl,
    "noise-gen": stage_noise_gen,
    "fit": stage_fit,
    "ssrr": stage_ssrr,
    "drex": stage_drex,
    "rl": stage_rl,
    "eval": stage_eval,
}


def run_stage(stage: str, cfg: PipelineConfig, seed: int, out) -> list:
    """Run one stage with every artifact in directory ``out``; returns written paths."""
    if stage not in STAGE_FUNCS:
        raise ConfigError(f"unknown stage {stage!r}")
    return STAGE_FUNCS[stage](cfg, seed, Layout.flat(out))


# -- comparison grid -------------------------------------------------------------


def _cell_config(cfg: PipelineConfig, generator: str, learner: str) -> PipelineConfig:
    return PipelineConfig(**{**cfg.to_dict(), "generator": generator, "learner": learner})


def run_pipeline(cfg: PipelineConfig, out) -> dict:
    """Run every (seed, generator, learner) cell, then write the summary tables.

    Stages shared between cells (demonstrations, BC, each AIRL variant, each
    dataset) run once per seed.  A failing stage fails every cell that
    depends on it; the remaining cells still run.
    """
    out = Path(out)
    cells = []
    for seed in cfg.seeds:
        done: dict = {}

        def once(key, fn):
            if key not in done:
                try:
                    fn()
                    done[key] = None
                except Exception as e:  # recorded per cell; other cells proceed
                    logger.exception("stage %s failed for seed %d", key, seed)
                    done[key] = f"{key}: {type(e).__name__}: {e}"
            return done[key]

        for generator in cfg.generators:
            for learner in cfg.learners:
                c = _cell_config(cfg, generator, learner)
                layout = Layout.nested(out, seed, generator, learner)
                steps = [("demo-gen", lambda: stage_demo_gen(c, seed, layout))]
                if generator == "bc":
                    steps.append(("bc", lambda: stage_bc(c, seed, layout)))
                noisy = generator == "noisy-airl"
                steps += [
                    ("noisy-airl" if noisy else "airl", lambda: stage_airl(c, seed, layout, noisy)),
                    (f"noise-gen/{generator}", lambda: stage_noise_gen(c, seed, layout)),
                    (f"fit/{generator}", lambda: stage_fit(c, seed, layout)),
                    (f"{learner}/{generator}", lambda: STAGE_FUNCS[learner](c, seed, layout)),
                    (f"rl/{generator}/{learner}", lambda: stage_rl(c, seed, layout, learner)),
                    (f"eval/{generator}/{learner}", lambda: stage_eval(c, seed, layout, learner)),
                ]
                error = None
                for key, fn in steps:
                    error = once(key, fn)
                    if error:
                        break
                row = {"generator": generator, "learner": learner, "seed": seed,
                       "status": "failed" if error else "ok", "error": error or ""}
                if not error:
                    rep = json.loads(layout.eval_report(learner).read_text())["report"]
                    row.update(rep)
                cells.append(row)
                logger.info("cell %s/%s seed %d: %s", generator, learner, seed, row["status"])
    return write_summary(cfg, out, cells)


def _mean_std(values):
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return None, None
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def write_summary(cfg: PipelineConfig, out, cells: list) -> dict:
    """Table-1 (correlations) and Table-2 (policy returns) CSVs plus per-cell results."""
    out = Path(out)
    order = {g: i for i, g in enumerate(GENERATORS)}, {l: i for i, l in enumerate(LEARNERS)}
    cells = sorted(cells, key=lambda r: (order[0][r["generator"]], order[1][r["learner"]], r["seed"]))
    prov = provenance(cfg, "pipeline", min(cfg.seeds))
    prov["seeds"] = list(cfg.seeds)
    t1, t2 = [], []
    for g in cfg.generators:
        for l in cfg.learners:
            group = [r for r in cells if r["generator"] == g and r["learner"] == l]
            ok = [r for r in group if r["status"] == "ok"]
            n_ok, n_fail = len(ok), len(group) - len(ok)
            row1 = [g, l, n_ok, n_fail]
            for key in ("pearson_test", "pearson_train", "pearson_pooled", "ranking_accuracy"):
                m, s = _mean_std(r.get(key) for r in ok)
                row1 += [_num(m), _num(s)]
            t1.append(row1)
            demo_m, _ = _mean_std(r.get("demo_mean_return") for r in ok)
            pol_m, pol_s = _mean_std(r.get("policy_mean_return") for r in ok)
            ratio_m, _ = _mean_std(r.get("improvement_ratio") for r in ok)
            t2.append([g, l, n_ok, n_fail, _num(demo_m), _num(pol_m), _num(pol_s), _num(ratio_m),
                       _num(None if ratio_m is None else 100.0 * ratio_m)])
    cell_rows = [[r["generator"], r["learner"], r["seed"], r["status"],
                  *(_num(r.get(k)) for k in CELLS_HEADER[4:-1]), r["error"]] for r in cells]
    paths = [
        write_csv(out / "table1.csv", prov, _csv_text(TABLE1_HEADER, t1)),
        write_csv(out / "table2.csv", prov, _csv_text(TABLE2_HEADER, t2)),
        write_csv(out / "cells.csv", prov, _csv_text(CELLS_HEADER, cell_rows)),
    ]
    return {"cells": cells, "paths": paths}


def read_table(path) -> list:
    """Rows of a summary CSV as dicts (skipping the provenance comment)."""
    lines = Path(path).read_text().splitlines()
    return list(csv.DictReader(line for line in lines if not line.startswith("#")))
