"""Model predictive controllers: the centralized adaptive-horizon teacher
(CAMPC) and its distributed fixed-neighborhood counterpart (DAMPC).

Both controllers search acceleration sequences with PSO, rolling candidates
through the constrained dynamics and scoring the state reached at the end of
the horizon. The horizon adapts: the shortest horizon whose optimized cost
achieves a required per-step decrease wins; if none does, the best clone is
used anyway. An agent (or the whole flock) that is already below the cost
threshold and stays below it by drifting keeps a zero acceleration, so
converged formations are held exactly.

CAMPC optimizes every agent against the global cost. DAMPC runs one
optimization per agent over its 7-agent neighborhood against the local cost
and keeps only that agent's own first-step acceleration; agents share no
information beyond sensed positions and velocities.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .cost import CostParameters, cost_batch
from .flock import (
    DynamicsParameters,
    FlockState,
    JointAction,
    clamp_accelerations,
    neighborhood,
)
from .pso import PsoParameters, action_bounds, pso_minimize
from .trajectory import Trajectory

DAMPC_NEIGHBORHOOD = 7


@dataclass(frozen=True)
class CampcConfig:
    horizon_min: int = 1
    horizon_max: int = 5
    pso: PsoParameters = field(default_factory=PsoParameters)
    dyn: DynamicsParameters = field(default_factory=DynamicsParameters)
    cost: CostParameters = field(default_factory=CostParameters)

    def __post_init__(self):
        if not 1 <= self.horizon_min <= self.horizon_max:
            raise ValueError("need 1 <= horizon_min <= horizon_max")

    @property
    def clone_count(self) -> int:
        return self.horizon_max - self.horizon_min + 1


@dataclass(frozen=True)
class DampcConfig:
    horizon_min: int = 1
    horizon_max: int = 3
    pso: PsoParameters = field(default_factory=PsoParameters)
    dyn: DynamicsParameters = field(default_factory=DynamicsParameters)
    cost: CostParameters = field(default_factory=CostParameters)

    def __post_init__(self):
        if not 1 <= self.horizon_min <= self.horizon_max <= 3:
            raise ValueError("horizon bounds must lie within [1, 3]")

    @property
    def neighborhood_size(self) -> int:
        return DAMPC_NEIGHBORHOOD


def rollout_cost_reference(x, v, sequences, dyn: DynamicsParameters, cost_params: CostParameters):
    """Vectorized numpy rollout evaluation; reference path."""
    B, h = sequences.shape[0], sequences.shape[1]
    xs = np.broadcast_to(x, (B,) + x.shape).copy()
    vs = np.broadcast_to(v, (B,) + v.shape).copy()
    for t in range(h):
        a = clamp_accelerations(vs, sequences[:, t], dyn)
        xs = xs + dyn.dt * vs
        vs = vs + dyn.dt * a
    return cost_batch(xs, vs, cost_params)


def rollout_cost(x, v, sequences, dyn: DynamicsParameters, cost_params: CostParameters):
    """Cost of the state reached by applying clamped action sequences.

    x, v: (n, 2) current state; sequences: (B, h, n, 2) candidate actions.
    Returns (B,) costs of the final rolled-out states.
    """
    if not _kernels.HAVE_NUMBA:
        return rollout_cost_reference(x, v, sequences, dyn, cost_params)
    sequences = np.ascontiguousarray(sequences, dtype=np.float64)
    inv = cost_params.sigma1_inv
    out = np.empty(sequences.shape[0])
    return _kernels.rollout_kernel(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
        sequences,
        dyn.dt, dyn.rho, dyn.v_max,
        cost_params.theta, cost_params.w, cost_params.alpha,
        cost_params.mu1[0], cost_params.mu1[1], inv[0, 0], inv[0, 1], inv[1, 1],
        cost_params.downwash_band, out,
    )


def required_decrease(
    current_cost: float, phi: float, steps_remaining: int, factor: float = 3.0
) -> float:
    """Per-step cost decrease demanded of a clone: a share of the remaining
    distance to the convergence threshold, front-loaded by ``factor`` so
    typical runs converge near mid-trajectory instead of at the buzzer."""
    return factor * max(0.0, current_cost - phi) / max(1, steps_remaining)


def _optimize_actions(x, v, n_agents, horizon_min, horizon_max, pso_params, dyn, cost_params,
                      current_cost, delta, rng, warm_start=None):
    """Adaptive-horizon PSO search shared by CAMPC and DAMPC.

    Returns (first-step accelerations (n, 2), chosen horizon, predicted
    cost, winning sequence (h, n, 2)). Horizons are tried shortest first; the
    first one whose optimized rollout achieves h times the per-step required
    decrease wins, otherwise the best clone overall. The swarm is seeded
    with the all-zero sequence (hold course), a few fine-scale candidates
    for small corrective maneuvers, and optionally a warm start carried over
    from the previous plan so committed multi-step plans are followed
    through across replanning.
    """
    d_step = 2 * n_agents
    best = None  # (cost, h, sequence)
    speeds = np.linalg.norm(v, axis=1)
    caps = dyn.rho * np.minimum(speeds, dyn.v_max)
    for h in range(horizon_min, horizon_max + 1):
        mags = np.tile(np.repeat(caps, 2), h)
        bounds = np.stack([-mags, mags], axis=1)
        # A clone is accepted when it reaches the level: the demanded
        # decrease for h lookahead steps, but never deeper than the
        # threshold itself. The swarm still optimizes to full depth (lazy
        # just-meet-the-level actions compound into dispersed flocks);
        # only a genuinely converged plan stops it early.
        level = max(cost_params.phi, current_cost - h * delta)
        clone_params = replace(
            pso_params,
            target_cost=cost_params.phi if pso_params.target_cost is None else pso_params.target_cost,
        )

        def objective(points, h=h):
            seqs = points.reshape(-1, h, n_agents, 2)
            return rollout_cost(x, v, seqs, dyn, cost_params)

        seeds = [np.zeros((1, h * d_step))]
        # Velocity consensus parks a near-formation state on the drift-stable
        # manifold (equal velocities), after which the hold-course shortcut
        # keeps it there.
        consensus = np.zeros((h, n_agents, 2))
        consensus[0] = (v.mean(axis=0) - v) / dyn.dt
        seeds.append(consensus.reshape(1, -1))
        # Sustained gather-and-align maneuvers give the swarm macro moves
        # that rejoin split sub-flocks; the swarm refines them.
        spread = x - x.mean(axis=0)
        align = v.mean(axis=0) - v
        for gain in (0.1, 0.3):
            gather = np.tile(-gain * spread + 0.5 * align, (h, 1, 1))
            seeds.append(gather.reshape(1, -1))
        seeds.append(rng.uniform(-0.05, 0.05, size=(4, h * d_step)) * mags)
        if warm_start is not None:
            carry = np.zeros((h, n_agents, 2))
            take = min(h, len(warm_start))
            carry[:take] = warm_start[:take]
            seeds.append(carry.reshape(1, -1))
        result = pso_minimize(
            objective,
            bounds,
            clone_params,
            rng,
            vectorized=True,
            seed_points=np.vstack(seeds),
        )
        if best is None or result.best_cost < best[0]:
            best = (result.best_cost, h, result.best_sequence)
        if result.best_cost <= level:
            best = (result.best_cost, h, result.best_sequence)
            break
    cost, h, sequence = best
    plan = sequence.reshape(h, n_agents, 2)
    return clamp_accelerations(v, plan[0], dyn), h, float(cost), plan


def campc_step(
    state: FlockState,
    cfg: CampcConfig,
    rng: np.random.Generator,
    steps_remaining: int = 50,
    warm_start=None,
) -> tuple[JointAction, int, float]:
    """One centralized control step over all agents against the global cost."""
    action, h, predicted, _ = campc_plan(state, cfg, rng, steps_remaining, warm_start)
    return action, h, predicted


def campc_plan(
    state: FlockState,
    cfg: CampcConfig,
    rng: np.random.Generator,
    steps_remaining: int = 50,
    warm_start=None,
) -> tuple[JointAction, int, float, np.ndarray]:
    """campc_step plus the full winning plan, for warm-started rollouts."""
    x, v = state.positions, state.velocities
    current = float(cost_batch(x[None], v[None], cfg.cost)[0])
    held = _hold_formation(x, v, state.n, cfg.horizon_min, cfg.dyn, cfg.cost)
    if held is not None:
        return held
    delta = required_decrease(current, cfg.cost.phi, steps_remaining)
    accel, h, predicted, plan = _optimize_actions(
        x, v, state.n, cfg.horizon_min, cfg.horizon_max, cfg.pso, cfg.dyn, cfg.cost,
        current, delta, rng, warm_start,
    )
    return JointAction(accel), h, predicted, plan


def _hold_formation(x, v, n, horizon_min, dyn, cost_params):
    """Deterministic formation keeping.

    Prefer pure drift when it lands below the threshold; otherwise steer
    every velocity to the flock mean, which makes the formation rigid (a
    drift-invariant cost) from the next step on. Returns None when neither
    move reaches the threshold.
    """
    drift = float(rollout_cost(x, v, np.zeros((1, horizon_min, n, 2)), dyn, cost_params)[0])
    if drift <= cost_params.phi:
        return JointAction.zero(n), horizon_min, drift, np.zeros((1, n, 2))
    consensus = np.zeros((1, 1, n, 2))
    consensus[0, 0] = (v.mean(axis=0) - v) / dyn.dt
    parked = float(rollout_cost(x, v, consensus, dyn, cost_params)[0])
    if parked <= cost_params.phi:
        accel = clamp_accelerations(v, consensus[0, 0], dyn)
        return JointAction(accel), horizon_min, parked, consensus[0]
    return None


def campc_trajectory(
    initial: FlockState,
    steps: int,
    cfg: CampcConfig,
    rng: np.random.Generator,
) -> Trajectory:
    """Closed-loop CAMPC rollout recording states, actions, and costs."""
    if steps < 1:
        raise ValueError("need at least one step")
    from .flock import step_dynamics

    states, actions, costs = [], [], []
    state = initial
    plan = None
    for t in range(steps):
        action, _, _, plan = campc_plan(
            state, cfg, rng, steps_remaining=steps - t, warm_start=plan[1:] if plan is not None else None
        )
        j = float(cost_batch(state.positions[None], state.velocities[None], cfg.cost)[0])
        states.append(state)
        actions.append(action)
        costs.append(j)
        if t + 1 < steps:
            state = step_dynamics(state, action, cfg.dyn)
    return Trajectory(states=states, actions=actions, costs=costs)


def dampc_step(
    state: FlockState,
    cfg: DampcConfig,
    rng: np.random.Generator,
    steps_remaining: int = 50,
    warm_starts: dict | None = None,
) -> JointAction:
    """One distributed control step: each agent plans for its 7-agent
    neighborhood against its local cost and keeps its own first action.

    warm_starts, when given, is a per-agent dict of previous plan tails; it
    is updated in place. Each agent only remembers its own plan, so the
    controller stays communication-free.
    """
    n = state.n
    if n < DAMPC_NEIGHBORHOOD:
        raise ValueError(f"DAMPC needs at least {DAMPC_NEIGHBORHOOD} agents, got {n}")
    # Independent per-agent streams so agents cannot covertly coordinate.
    agent_seeds = rng.integers(0, 2**63, size=n)
    accel = np.zeros((n, 2))
    for i in range(n):
        arng = np.random.default_rng(agent_seeds[i])
        members = neighborhood(state, i, DAMPC_NEIGHBORHOOD)
        x = state.positions[members]
        v = state.velocities[members]
        current = float(cost_batch(x[None], v[None], cfg.cost)[0])
        held = _hold_formation(x, v, DAMPC_NEIGHBORHOOD, cfg.horizon_min, cfg.dyn, cfg.cost)
        if held is not None:
            if warm_starts is not None:
                warm_starts.pop(i, None)
            accel[i] = held[0].accelerations[0]  # members[0] == i
            continue
        delta = required_decrease(current, cfg.cost.phi, steps_remaining)
        carry = warm_starts.get(i) if warm_starts is not None else None
        first, _, _, plan = _optimize_actions(
            x, v, DAMPC_NEIGHBORHOOD, cfg.horizon_min, cfg.horizon_max, cfg.pso,
            cfg.dyn, cfg.cost, current, delta, arng, carry,
        )
        accel[i] = first[0]  # members[0] == i
        if warm_starts is not None:
            warm_starts[i] = plan[1:]
    accel = clamp_accelerations(state.velocities, accel, cfg.dyn)
    return JointAction(accel)


def campc_controller(cfg: CampcConfig, steps_remaining: int = 50):
    """Adapt the centralized planner to controller(state, rng) -> JointAction.

    The closure carries the previous plan tail between calls so multi-step
    maneuvers are followed through.
    """
    memory = {"plan": None}

    def controller(state, rng):
        action, _, _, plan = campc_plan(
            state, cfg, rng, steps_remaining=steps_remaining, warm_start=memory["plan"]
        )
        memory["plan"] = plan[1:]
        return action

    return controller


def dampc_controller(cfg: DampcConfig, steps_remaining: int = 50):
    """Adapt dampc_step to controller(state, rng) -> JointAction, keeping
    per-agent plan memory between calls."""
    warm_starts: dict = {}

    def controller(state, rng):
        return dampc_step(
            state, cfg, rng, steps_remaining=steps_remaining, warm_starts=warm_starts
        )

    return controller
