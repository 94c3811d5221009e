"""Adversarial initial configurations for distributed controllers.

Three constructions defeat natural classes of symmetric distributed
control, turned here into executable regression tests:

* two well-separated perfect V sub-formations: every agent's neighborhood
  is already a perfect V, so any formation-keeping controller freezes and
  the groups never merge;
* a diamond: four velocity-matched agents whose 2-member neighborhoods all
  look like local formations even though the trailing agent's view is
  blocked;
* eight agents on a circle moving radially outward: the configuration is
  rotation-symmetric, so any rotation-invariant controller that keeps its
  heading when aligned with the neighborhood mean velocity preserves the
  circle forever.

The reference AveragingController (accelerate toward the neighborhood mean
velocity) satisfies those premises and exhibits each predicted failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cost import CostParameters, cost_batch, make_v_formation
from .flock import DynamicsParameters, FlockState, JointAction, clamp_action, neighborhood
from .trajectory import Trajectory, run_closed_loop


@dataclass(frozen=True)
class Scenario:
    """A named initial-state generator with an expected-failure predicate."""

    name: str
    build: object  # () -> FlockState
    neighborhood_size: int
    failed: object  # (Trajectory) -> bool, True when the predicted failure occurred
    description: str = ""


@dataclass
class ScenarioVerdict:
    failure_observed: bool
    trajectory: Trajectory


class AveragingController:
    """Accelerate toward the mean velocity of the sensed neighborhood.

    acceleration_i = gain * (mean velocity of i's l-member neighborhood - v_i)

    The rule only uses relative quantities, so it is invariant under
    rotation of the coordinate frame, and it never turns an agent whose
    velocity is already aligned with the neighborhood mean.
    """

    def __init__(self, gain: float = 0.1, neighborhood_size: int = 3):
        if gain <= 0:
            raise ValueError("gain must be positive")
        self.gain = gain
        self.neighborhood_size = neighborhood_size

    def __call__(self, state: FlockState, rng=None) -> JointAction:
        accel = np.zeros((state.n, 2))
        for i in range(state.n):
            members = neighborhood(state, i, self.neighborhood_size)
            mean_v = state.velocities[members].mean(axis=0)
            accel[i] = self.gain * (mean_v - state.velocities[i])
        return JointAction(accel)


def scenario_disconnected_vs(
    n: int,
    k: int,
    separation: float,
    params: CostParameters | None = None,
    heading=(0.0, 1.0),
    speed: float = 1.0,
) -> FlockState:
    """Two perfect V sub-formations of k and n-k agents, offset sideways.

    Requires k = floor(n/2) and a separation large enough that every agent's
    k-1 nearest neighbors belong to its own group.
    """
    params = params or CostParameters()
    if k != n // 2:
        raise ValueError("group size k must be floor(n/2)")
    if k < 3 or n - k < 3:
        raise ValueError("each group needs at least 3 agents")
    first = make_v_formation(k, params, heading, speed)
    second = make_v_formation(n - k, params, heading, speed)
    hvec = np.asarray(heading, float)
    hvec = hvec / np.linalg.norm(hvec)
    offset = separation * np.array([-hvec[1], hvec[0]])
    positions = np.vstack([first.positions, second.positions + offset])
    velocities = np.vstack([first.velocities, second.velocities])
    state = FlockState(positions, velocities)

    group = np.array([0] * k + [1] * (n - k))
    for i in range(n):
        members = neighborhood(state, i, k)
        if any(group[m] != group[i] for m in members):
            raise ValueError(
                f"separation {separation} too small: agent {i}'s nearest "
                f"neighbors cross groups"
            )
    return state


def scenario_diamond(a: float = 1.0, b: float = 1.0) -> FlockState:
    """Four velocity-matched agents: a 3-agent wedge plus a trailing agent
    at the optimal-upwash point behind the wedge, all moving straight up."""
    if a <= 0 or b <= 0:
        raise ValueError("diamond extents must be positive")
    positions = np.array([[0.0, a], [-b, 0.0], [b, 0.0], [0.0, -a]])
    velocities = np.tile([0.0, 1.0], (4, 1))
    return FlockState(positions, velocities)


def scenario_circle8(radius: float, speed: float) -> FlockState:
    """Eight agents evenly spaced on a circle, moving radially outward."""
    if radius <= 0 or speed <= 0:
        raise ValueError("radius and speed must be positive")
    angles = 2.0 * math.pi * np.arange(8) / 8.0
    outward = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return FlockState(radius * outward, speed * outward)


def run_scenario(
    scenario: Scenario,
    controller,
    steps: int,
    dyn: DynamicsParameters,
    cost_params: CostParameters,
    rng: np.random.Generator | None = None,
    clamp: bool = True,
) -> ScenarioVerdict:
    """Roll the controller from the scenario's initial state and evaluate
    the expected-failure predicate. Clamping can be disabled so symmetry
    arguments are not confounded by the constraint projection."""
    initial = scenario.build()
    if clamp:
        wrapped = lambda state, r: clamp_action(state, controller(state, r), dyn)
    else:
        wrapped = controller
    traj = run_closed_loop(initial, wrapped, steps, dyn, cost_params, rng)
    return ScenarioVerdict(failure_observed=bool(scenario.failed(traj)), trajectory=traj)


def never_converges(cost_params: CostParameters):
    """Failure predicate: the global cost never reaches the threshold."""

    def failed(traj: Trajectory) -> bool:
        return min(traj.costs) > cost_params.phi

    return failed


def default_registry(cost_params: CostParameters | None = None) -> dict:
    """Named scenarios addressable from the CLI."""
    params = cost_params or CostParameters()
    fail = never_converges(params)
    return {
        "disconnected_vs": Scenario(
            name="disconnected_vs",
            build=lambda: scenario_disconnected_vs(14, 7, 100.0 * params.w, params),
            neighborhood_size=7,
            failed=fail,
            description="two separated perfect Vs never merge",
        ),
        "diamond": Scenario(
            name="diamond",
            build=scenario_diamond,
            neighborhood_size=2,
            failed=fail,
            description="locally-perfect pairs hide a blocked view",
        ),
        "circle8": Scenario(
            name="circle8",
            build=lambda: scenario_circle8(1.0, 1.0),
            neighborhood_size=3,
            failed=fail,
            description="rotation symmetry pins agents to a circle",
        ),
    }
