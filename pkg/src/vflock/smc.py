"""Statistical verification of a controller by additive (epsilon, delta)
Monte Carlo approximation.

With N = ceil(4 ln(2/delta) / epsilon^2) independent trials, the sample
means of the per-trial success indicator and normalized convergence time
land within epsilon of the true means with probability at least 1 - delta
(Chernoff-Hoeffding instantiation of the Bernstein inequality). Thresholds
and trial lengths scale with flock size: a run over n agents uses
(n/7) * 50 steps and succeeds when the final cost is at most (n/7) * 1e-3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cost import CostParameters
from .flock import DynamicsParameters, sample_initial_state
from .trajectory import run_closed_loop, sustained_step


def sample_count(epsilon: float, delta: float) -> int:
    """Trials needed for an additive (epsilon, delta)-approximation."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return math.ceil(4.0 * math.log(2.0 / delta) / epsilon**2)


@dataclass(frozen=True)
class SmcConfig:
    epsilon: float
    delta: float
    n_agents: int = 7
    base_steps: int = 50
    base_threshold: float = 1e-3
    position_range: tuple[float, float] = (0.0, 5.0)
    velocity_range: tuple[float, float] = (0.25, 0.75)

    def __post_init__(self):
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise ValueError("epsilon and delta must lie in (0, 1)")
        if self.n_agents < 1:
            raise ValueError("need at least one agent")

    @property
    def steps(self) -> int:
        return max(1, round(self.n_agents / 7 * self.base_steps))

    @property
    def threshold(self) -> float:
        return self.n_agents / 7 * self.base_threshold


@dataclass(frozen=True)
class SmcSample:
    """Outcome of one trial: success flag and normalized convergence time.

    The time is the first step index after which the cost stays below the
    threshold for the rest of the run, divided by the number of steps; a run
    that never converges reports 1 by convention.
    """

    converged: bool
    normalized_time: float


@dataclass(frozen=True)
class SmcReport:
    success_rate: float
    mean_convergence_time: float
    trials: int


def run_trial(
    controller,
    cfg: SmcConfig,
    rng: np.random.Generator,
    dyn: DynamicsParameters,
    cost_params: CostParameters,
    initial=None,
) -> SmcSample:
    """Simulate one closed-loop run from a random (or given) initial state."""
    if initial is None:
        initial = sample_initial_state(cfg.n_agents, cfg.position_range, cfg.velocity_range, rng)
    traj = run_closed_loop(initial, controller, cfg.steps, dyn, cost_params, rng)
    return monitor_costs(traj.costs, cfg.threshold)


def monitor_costs(costs, threshold: float) -> SmcSample:
    """Score a cost trace: success is final cost at or below the threshold;
    the sustained convergence step is normalized by the trace length."""
    converged = costs[-1] <= threshold
    t = sustained_step(costs, threshold)
    if t is None:
        return SmcSample(converged=False, normalized_time=1.0)
    return SmcSample(converged=converged, normalized_time=t / len(costs))


def smc_estimate(
    controller,
    cfg: SmcConfig,
    master_seed: int,
    dyn: DynamicsParameters,
    cost_params: CostParameters,
) -> SmcReport:
    """Run the full additive-approximation trial campaign.

    Per-trial generators are derived from (master seed, trial index), so the
    estimate does not depend on execution order.
    """
    n = sample_count(cfg.epsilon, cfg.delta)
    total_b = 0.0
    total_r = 0.0
    for trial in range(n):
        rng = np.random.default_rng([master_seed, trial])
        sample = run_trial(controller, cfg, rng, dyn, cost_params)
        total_b += 1.0 if sample.converged else 0.0
        total_r += sample.normalized_time
    return SmcReport(success_rate=total_b / n, mean_convergence_time=total_r / n, trials=n)
