"""Global-best particle swarm optimization over a box of decision variables.

This is the inner optimizer of both MPC controllers: it searches flattened
acceleration sequences inside per-coordinate bounds. Constriction-style
coefficients (inertia 0.729, cognitive = social = 1.494) are the defaults.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PsoParameters:
    particles: int = 30
    max_iterations: int = 200
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    time_budget: float | None = None  # seconds of wall clock
    target_cost: float | None = None  # stop once the global best reaches this

    def __post_init__(self):
        if self.particles < 2:
            raise ValueError("need at least 2 particles")
        if self.max_iterations < 1:
            raise ValueError("need at least 1 iteration")
        if not 0 <= self.inertia <= 1:
            raise ValueError("inertia must lie in [0, 1]")
        if self.cognitive < 0 or self.social < 0:
            raise ValueError("acceleration weights must be nonnegative")


@dataclass(frozen=True)
class PsoResult:
    best_sequence: np.ndarray  # flattened decision vector within bounds
    best_cost: float
    iterations_used: int
    history: tuple  # global-best cost after init and after each iteration

    def __post_init__(self):
        seq = np.asarray(self.best_sequence, float)
        seq.setflags(write=False)
        object.__setattr__(self, "best_sequence", seq)


def pso_minimize(
    objective,
    bounds,
    params: PsoParameters,
    rng: np.random.Generator,
    *,
    vectorized: bool = False,
    seed_points: np.ndarray | None = None,
) -> PsoResult:
    """Minimize objective over the box given by bounds.

    bounds is a (d, 2) array of [lo, hi] per coordinate. With
    ``vectorized=True`` the objective receives a (p, d) matrix and must
    return p costs; otherwise it is called once per particle. seed_points
    optionally pins the first particles to given in-box positions (the MPC
    controllers seed the all-zero sequence this way). Deterministic for a
    fixed generator state.
    """
    bounds = np.asarray(bounds, float)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or bounds.shape[0] == 0:
        raise ValueError("bounds must be a nonempty (d, 2) array")
    lo, hi = bounds[:, 0], bounds[:, 1]
    if np.any(lo > hi):
        raise ValueError("invalid bounds: lo > hi")
    d = bounds.shape[0]
    p = params.particles

    span = hi - lo
    pos = lo + rng.uniform(0.0, 1.0, size=(p, d)) * span
    if seed_points is not None:
        seed_points = np.atleast_2d(np.asarray(seed_points, float))
        k = min(len(seed_points), p)
        pos[:k] = np.clip(seed_points[:k], lo, hi)
    vel = rng.uniform(-1.0, 1.0, size=(p, d)) * span

    def evaluate(points):
        if vectorized:
            return np.asarray(objective(points), float)
        return np.array([float(objective(q)) for q in points])

    cost = evaluate(pos)
    pbest = pos.copy()
    pbest_cost = cost.copy()
    g = int(np.argmin(pbest_cost))
    gbest = pbest[g].copy()
    gbest_cost = float(pbest_cost[g])
    history = [gbest_cost]

    deadline = None if params.time_budget is None else time.perf_counter() + params.time_budget
    iterations = 0
    for _ in range(params.max_iterations):
        if params.target_cost is not None and gbest_cost <= params.target_cost:
            break
        if deadline is not None and time.perf_counter() >= deadline:
            break
        r1 = rng.uniform(size=(p, d))
        r2 = rng.uniform(size=(p, d))
        vel = (
            params.inertia * vel
            + params.cognitive * r1 * (pbest - pos)
            + params.social * r2 * (gbest - pos)
        )
        pos = np.clip(pos + vel, lo, hi)
        cost = evaluate(pos)
        improved = cost < pbest_cost
        pbest[improved] = pos[improved]
        pbest_cost[improved] = cost[improved]
        g = int(np.argmin(pbest_cost))
        if pbest_cost[g] < gbest_cost:
            gbest = pbest[g].copy()
            gbest_cost = float(pbest_cost[g])
        iterations += 1
        history.append(gbest_cost)

    return PsoResult(
        best_sequence=gbest,
        best_cost=gbest_cost,
        iterations_used=iterations,
        history=tuple(history),
    )


def action_bounds(state, controlled, horizon: int, dyn) -> np.ndarray:
    """Box relaxation of the acceleration constraint for a decision vector.

    Coordinates are ordered step-major: (step, controlled agent, x/y). Each
    component is bounded by rho * min(|v_i|, v_max) using the agent's speed
    at the current state; the exact norm constraint is re-enforced by
    clamping during rollout.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    controlled = list(controlled)
    speeds = np.linalg.norm(state.velocities[controlled], axis=1)
    caps = dyn.rho * np.minimum(speeds, dyn.v_max)
    per_step = np.repeat(caps, 2)  # x and y per agent
    mags = np.tile(per_step, horizon)
    return np.stack([-mags, mags], axis=1)
