"""Experiment configuration: one INI-style file defines a full experiment.

A configuration aggregates the parameter blocks of every subsystem plus the
master seed and the scale preset. It hashes to a stable digest that is
embedded in every artifact, so mixed-provenance inputs are detected.

Two scale presets are built in. ``desk`` keeps the full pipeline runnable on
a laptop (hundreds of teacher trajectories, 500-run test batches, 200
epochs, normalized network inputs, a faster learning rate, and a lighter
swarm budget). ``paper`` restores the full-scale settings (tens of
thousands of teacher trajectories, 10^4-run test batches, 1000 epochs at
learning rate 1e-4).
"""

from __future__ import annotations

import ast
import configparser
import dataclasses
import hashlib
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .cegkr import CegkrConfig
from .cost import CostParameters
from .flock import DynamicsParameters
from .mpc import CampcConfig, DampcConfig
from .nn import TrainConfig
from .pso import PsoParameters


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 0
    scale: str = "desk"
    out_dir: str = "results"
    teacher_trajectories: int = 200
    compare_batch: int = 100
    compare_agents: tuple = (7, 10, 13)
    smc_epsilon: float = 0.2
    smc_delta: float = 0.2
    robustness_batch: int = 300
    dyn: DynamicsParameters = field(default_factory=DynamicsParameters)
    cost: CostParameters = field(default_factory=CostParameters)
    pso: PsoParameters = field(default_factory=PsoParameters)
    campc: CampcConfig = None
    dampc: DampcConfig = None
    train: TrainConfig = field(default_factory=TrainConfig)
    cegkr: CegkrConfig = None

    def __post_init__(self):
        if self.scale not in ("desk", "paper"):
            raise ValueError("scale must be 'desk' or 'paper'")
        if self.campc is None:
            object.__setattr__(
                self, "campc", CampcConfig(pso=self.pso, dyn=self.dyn, cost=self.cost)
            )
        if self.dampc is None:
            object.__setattr__(
                self, "dampc", DampcConfig(pso=self.pso, dyn=self.dyn, cost=self.cost)
            )
        if self.cegkr is None:
            object.__setattr__(
                self, "cegkr", CegkrConfig(teacher=self.campc, train=self.train)
            )
        if self.cegkr.k > self.cegkr.steps:
            raise ValueError("cegkr cutoff k must not exceed the step count")

    def config_hash(self) -> str:
        digest = hashlib.sha256(canonical_dump(self).encode()).hexdigest()
        return digest[:12]


def desk_config(master_seed: int = 0, out_dir: str = "results") -> ExperimentConfig:
    """Laptop-scale preset preserving every trend check."""
    dyn = DynamicsParameters()
    cost = CostParameters()
    pso = PsoParameters(particles=30, max_iterations=200)
    campc = CampcConfig(horizon_min=1, horizon_max=5, pso=pso, dyn=dyn, cost=cost)
    dampc = DampcConfig(horizon_min=1, horizon_max=3, pso=pso, dyn=dyn, cost=cost)
    train = TrainConfig(batch_size=500, epochs=200, lr=1e-3, normalize=True)
    cegkr = CegkrConfig(k=10, test_batch=500, teacher=campc, train=train)
    return ExperimentConfig(
        master_seed=master_seed,
        scale="desk",
        out_dir=out_dir,
        teacher_trajectories=200,
        compare_batch=100,
        compare_agents=(7, 10, 13),
        smc_epsilon=0.2,
        smc_delta=0.2,
        robustness_batch=300,
        dyn=dyn,
        cost=cost,
        pso=pso,
        campc=campc,
        dampc=dampc,
        train=train,
        cegkr=cegkr,
    )


def paper_config(master_seed: int = 0, out_dir: str = "results") -> ExperimentConfig:
    """Full-scale preset matching the published campaign sizes."""
    dyn = DynamicsParameters()
    cost = CostParameters()
    pso = PsoParameters(particles=30, max_iterations=200)
    campc = CampcConfig(horizon_min=1, horizon_max=5, pso=pso, dyn=dyn, cost=cost)
    dampc = DampcConfig(horizon_min=1, horizon_max=3, pso=pso, dyn=dyn, cost=cost)
    train = TrainConfig(batch_size=500, epochs=1000, lr=1e-4, normalize=False)
    cegkr = CegkrConfig(k=35, test_batch=10_000, teacher=campc, train=train)
    return ExperimentConfig(
        master_seed=master_seed,
        scale="paper",
        out_dir=out_dir,
        teacher_trajectories=50_000,
        compare_batch=10_000,
        compare_agents=tuple(range(7, 17)),
        smc_epsilon=0.01,
        smc_delta=0.0001,
        robustness_batch=10_000,
        dyn=dyn,
        cost=cost,
        pso=pso,
        campc=campc,
        dampc=dampc,
        train=train,
        cegkr=cegkr,
    )


def preset(scale: str, master_seed: int = 0, out_dir: str = "results") -> ExperimentConfig:
    if scale == "desk":
        return desk_config(master_seed, out_dir)
    if scale == "paper":
        return paper_config(master_seed, out_dir)
    raise ValueError(f"unknown scale preset {scale!r}")


# ---------------------------------------------------------------------------
# flattening to/from INI sections
# ---------------------------------------------------------------------------

_SECTIONS = {
    "dynamics": ("dyn", DynamicsParameters),
    "cost": ("cost", CostParameters),
    "pso": ("pso", PsoParameters),
    "campc": ("campc", CampcConfig),
    "dampc": ("dampc", DampcConfig),
    "train": ("train", TrainConfig),
    "cegkr": ("cegkr", CegkrConfig),
}

# nested blocks inside campc/dampc/cegkr are reconstructed from the top-level
# sections, so they are skipped when flattening
_SKIP_FIELDS = {"pso", "dyn", "cost", "teacher", "train"}


def _flatten_block(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        if f.name in _SKIP_FIELDS:
            continue
        out[f.name] = repr(getattr(obj, f.name))
    return out


def canonical_dump(cfg: ExperimentConfig) -> str:
    """Stable text rendering used for hashing and for config files."""
    parser = configparser.ConfigParser()
    parser["experiment"] = {
        "master_seed": repr(cfg.master_seed),
        "scale": repr(cfg.scale),
        "teacher_trajectories": repr(cfg.teacher_trajectories),
        "compare_batch": repr(cfg.compare_batch),
        "compare_agents": repr(tuple(cfg.compare_agents)),
        "smc_epsilon": repr(cfg.smc_epsilon),
        "smc_delta": repr(cfg.smc_delta),
        "robustness_batch": repr(cfg.robustness_batch),
    }
    for section, (attr, _) in _SECTIONS.items():
        parser[section] = _flatten_block(getattr(cfg, attr))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(canonical_dump(cfg))


def load_config(path, out_dir: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    exp = {k: ast.literal_eval(v) for k, v in parser["experiment"].items()}
    blocks = {}
    for section, (attr, cls) in _SECTIONS.items():
        kwargs = (
            {k: ast.literal_eval(v) for k, v in parser[section].items()}
            if parser.has_section(section)
            else {}
        )
        blocks[attr] = (cls, kwargs)

    dyn = blocks["dyn"][0](**blocks["dyn"][1])
    cost = blocks["cost"][0](**blocks["cost"][1])
    pso = blocks["pso"][0](**blocks["pso"][1])
    campc = CampcConfig(pso=pso, dyn=dyn, cost=cost, **blocks["campc"][1])
    dampc = DampcConfig(pso=pso, dyn=dyn, cost=cost, **blocks["dampc"][1])
    train = TrainConfig(**blocks["train"][1])
    cegkr = CegkrConfig(teacher=campc, train=train, **blocks["cegkr"][1])
    return ExperimentConfig(
        dyn=dyn,
        cost=cost,
        pso=pso,
        campc=campc,
        dampc=dampc,
        train=train,
        cegkr=cegkr,
        out_dir=out_dir if out_dir is not None else "results",
        **exp,
    )
