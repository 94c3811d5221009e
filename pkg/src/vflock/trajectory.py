"""Closed-loop trajectory record and shared rollout helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cost import CostParameters, cost_batch
from .flock import DynamicsParameters, FlockState, JointAction, step_dynamics


@dataclass
class Trajectory:
    """Sequence of (state, action) pairs with the cost of each state.

    Record t holds the state s_t, the action a_t applied at s_t, and J(s_t);
    s_{t+1} follows from the dynamics, so the final recorded action is the
    controller output at the last recorded state.
    """

    states: list  # FlockState per step
    actions: list  # JointAction per step
    costs: list  # global cost J(s_t) per step
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n(self) -> int:
        return self.states[0].n

    @property
    def final_cost(self) -> float:
        return self.costs[-1]


def run_closed_loop(
    initial: FlockState,
    controller,
    steps: int,
    dyn: DynamicsParameters,
    cost_params: CostParameters,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Roll a controller for the given number of steps.

    The controller is called as controller(state, rng) and must return a
    JointAction; the recorded trajectory has exactly ``steps`` records.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    states, actions, costs = [], [], []
    state = initial
    for t in range(steps):
        action = controller(state, rng)
        j = float(cost_batch(state.positions[None], state.velocities[None], cost_params)[0])
        states.append(state)
        actions.append(action)
        costs.append(j)
        if t + 1 < steps:
            state = step_dynamics(state, action, dyn)
    return Trajectory(states=states, actions=actions, costs=costs)


def first_passage_step(costs, threshold: float) -> int | None:
    """First index whose cost is at or below the threshold, if any."""
    for t, c in enumerate(costs):
        if c <= threshold:
            return t
    return None


def sustained_step(costs, threshold: float) -> int | None:
    """First index from which the cost stays at or below the threshold."""
    result = None
    for t, c in enumerate(costs):
        if c <= threshold:
            if result is None:
                result = t
        else:
            result = None
    return result
