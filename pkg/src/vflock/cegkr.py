"""Counterexample-guided k-fold retraining of the neural controller.

Each round tests the current controller on a fresh batch of random initial
states. Failed runs are counterexamples; the first k states of every failed
trajectory become new initial states for the centralized teacher, whose
rollouts are converted into additional training samples. The controller is
retrained from scratch on all data collected so far. Rounds continue while
the success rate keeps improving; the best-performing model is returned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cost import CostParameters
from .flock import DynamicsParameters, FlockState, sample_initial_state
from .mpc import CampcConfig, campc_trajectory
from .nn import MlpModel, TrainConfig, dnc_controller, extract_samples, samples_to_arrays, train
from .trajectory import Trajectory, run_closed_loop
from .util import parallel_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CegkrConfig:
    k: int = 10  # counterexample prefix reused as teacher initial states
    test_batch: int = 500
    steps: int = 50
    threshold: float = 1e-3
    position_range: tuple[float, float] = (0.0, 5.0)
    velocity_range: tuple[float, float] = (0.25, 0.75)
    n_agents: int = 7
    max_rounds: int | None = None  # safety valve; None runs the pure stop rule
    teacher: CampcConfig = field(default_factory=CampcConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not 1 <= self.k <= self.steps:
            raise ValueError("cutoff k must lie in [1, steps]")
        if self.test_batch < 1:
            raise ValueError("test batch must be positive")


@dataclass(frozen=True)
class RoundReport:
    """One testing round, shaped like one row of the retraining table:
    the guided counts are the samples that trained this round's model
    (zero for the initial round)."""

    round_id: int
    guided_samples: int  # kept teacher trajectories * agents for this round's model
    guided_points: int  # individual training points added for this round's model
    success_rate: float
    failed_count: int
    median_final_cost: float


def evaluate_controller(
    model: MlpModel,
    cfg: CegkrConfig,
    rng: np.random.Generator,
    dyn: DynamicsParameters,
    cost_params: CostParameters,
) -> tuple[float, list, float]:
    """Closed-loop test on test_batch random initial states.

    Returns (success rate, failed trajectories in full, median final cost).
    A run succeeds when its final cost is at or below the threshold. Each
    run owns a pre-split random stream, so results do not depend on
    execution order.
    """
    controller = dnc_controller(model, cost_params, dyn)
    seeds = rng.integers(0, 2**63, size=cfg.test_batch)

    def one(seed):
        trial_rng = np.random.default_rng(seed)
        initial = sample_initial_state(
            cfg.n_agents, cfg.position_range, cfg.velocity_range, trial_rng
        )
        return run_closed_loop(initial, controller, cfg.steps, dyn, cost_params)

    trajectories = parallel_map(one, seeds)
    finals = [t.final_cost for t in trajectories]
    failures = [t for t in trajectories if t.final_cost > cfg.threshold]
    rate = 1.0 - len(failures) / cfg.test_batch
    return rate, failures, float(np.median(finals))


def harvest_retraining_states(failures, k: int) -> list:
    """First k states of every failed trajectory, order preserved."""
    states = []
    for traj in failures:
        if k > len(traj):
            raise ValueError(f"cutoff {k} exceeds trajectory length {len(traj)}")
        states.extend(traj.states[:k])
    return states


def teacher_samples(
    states,
    cfg: CegkrConfig,
    rng: np.random.Generator,
) -> tuple[list, int]:
    """Run the teacher from each harvested state and extract samples.

    Teacher rollouts that fail to converge are dropped (and logged); the
    returned count is the number of kept trajectories.
    """
    seeds = rng.integers(0, 2**63, size=len(states))

    def one(item):
        state, seed = item
        return campc_trajectory(state, cfg.steps, cfg.teacher, np.random.default_rng(seed))

    trajectories = parallel_map(one, zip(states, seeds))
    samples = []
    kept = 0
    for traj in trajectories:
        if traj.final_cost > cfg.teacher.cost.phi:
            logger.info("teacher failed to converge from a harvested state; dropped")
            continue
        samples.extend(extract_samples(traj, cfg.teacher.cost))
        kept += 1
    return samples, kept


def cegkr_run(
    initial_samples,
    cfg: CegkrConfig,
    rng: np.random.Generator,
    initial_model: MlpModel | None = None,
) -> tuple[MlpModel, list]:
    """Full retraining loop starting from an initial training dataset.

    Trains (unless a pre-trained model is supplied), evaluates, and while
    the success rate improves: harvests counterexample prefixes, generates
    teacher data from them, and retrains from scratch on the cumulative
    dataset. Returns the model with the best recorded success rate and one
    report per testing round.
    """
    dyn, cost_params = cfg.teacher.dyn, cfg.teacher.cost
    dataset = list(initial_samples) if initial_samples is not None else []
    if initial_model is None and not dataset:
        raise ValueError("need an initial dataset or an initial model")

    model = initial_model
    if model is None:
        model, _ = train(samples_to_arrays(dataset), cfg.train, rng)

    reports: list[RoundReport] = []
    best: tuple[float, MlpModel] | None = None
    round_id = 1
    guided_samples = 0
    guided_points = 0
    while True:
        rate, failures, median_final = evaluate_controller(model, cfg, rng, dyn, cost_params)
        reports.append(
            RoundReport(round_id, guided_samples, guided_points, rate, len(failures), median_final)
        )
        if best is None or rate > best[0]:
            best = (rate, model)
        improved = len(reports) == 1 or rate > reports[-2].success_rate
        at_cap = cfg.max_rounds is not None and round_id >= cfg.max_rounds
        if not failures or not improved or at_cap:
            break

        states = harvest_retraining_states(failures, cfg.k)
        new_samples, kept = teacher_samples(states, cfg, rng)
        dataset.extend(new_samples)
        guided_samples = kept * cfg.n_agents
        guided_points = len(new_samples)
        model, _ = train(samples_to_arrays(dataset), cfg.train, rng)
        round_id += 1

    return best[1], reports
