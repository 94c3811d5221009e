"""Flock state, discrete-time dynamics, motion constraints, and local views.

Positions and velocities are 2D. A flock of n agents evolves by

    x(t+1) = x(t) + dt * v(t)
    v(t+1) = v(t) + dt * a(t)

with both updates evaluated from the state at time t (the position update
uses the pre-update velocity). Accelerations are constrained to
``|a_i| <= rho * |v_i|`` and may never push a speed above ``v_max``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

# Controllers sense a fixed neighborhood of 7 agents (self included); a local
# view is 7 * (2 position + 2 velocity) features plus the local cost value.
VIEW_SIZE = 7
VIEW_FEATURES = 4 * VIEW_SIZE + 1  # 29


def _as_readonly(a, shape, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DynamicsParameters:
    """Time step, speed cap, and acceleration-to-speed ratio."""

    dt: float = 1.0
    v_max: float = 2.0
    rho: float = 0.9

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")


@dataclass(frozen=True)
class FlockState:
    """Positions and velocities of n agents at one time step. Immutable."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must have shape (n, 2)")
        n = pos.shape[0]
        object.__setattr__(self, "positions", _as_readonly(pos, (n, 2), "positions"))
        object.__setattr__(
            self, "velocities", _as_readonly(self.velocities, (n, 2), "velocities")
        )

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def translated(self, offset) -> "FlockState":
        return FlockState(self.positions + np.asarray(offset, float), self.velocities)


@dataclass(frozen=True)
class JointAction:
    """Per-agent 2D accelerations for one time step. Immutable."""

    accelerations: np.ndarray

    def __post_init__(self):
        acc = np.asarray(self.accelerations, dtype=np.float64)
        if acc.ndim != 2 or acc.shape[1] != 2:
            raise ValueError("accelerations must have shape (n, 2)")
        object.__setattr__(
            self, "accelerations", _as_readonly(acc, acc.shape, "accelerations")
        )

    @property
    def n(self) -> int:
        return self.accelerations.shape[0]

    @classmethod
    def zero(cls, n: int) -> "JointAction":
        return cls(np.zeros((n, 2)))


@dataclass(frozen=True)
class LocalView:
    """One agent's 29-feature observation.

    Layout: [px0, py0, vx0, vy0, ..., px6, py6, vx6, vy6, J] where positions
    are relative to the observing agent (so the first two entries are zero),
    velocities are absolute, agents appear in order of increasing distance,
    and J is the observer's local cost.
    """

    features: np.ndarray

    def __post_init__(self):
        f = _as_readonly(self.features, (VIEW_FEATURES,), "features")
        if f[0] != 0.0 or f[1] != 0.0:
            raise ValueError("self-relative position must be (0, 0)")
        object.__setattr__(self, "features", f)


def step_dynamics(
    state: FlockState, action: JointAction, params: DynamicsParameters
) -> FlockState:
    """Advance one time step; the position update uses the old velocity."""
    if action.n != state.n:
        raise ValueError(f"action has {action.n} agents, state has {state.n}")
    x, v = step_arrays(state.positions, state.velocities, action.accelerations, params)
    return FlockState(x, v)


def step_arrays(x, v, a, params: DynamicsParameters):
    """Array form of the dynamics update; broadcasts over leading batch axes."""
    return x + params.dt * v, v + params.dt * a


def clamp_accelerations(v, a, params: DynamicsParameters) -> np.ndarray:
    """Array form of clamp_action over (..., n, 2) velocity/acceleration stacks.

    First rescales each acceleration onto the ball ``|a| <= rho * |v|``
    (direction preserved), then shrinks it further if the post-step speed
    would exceed v_max, so that the resulting speed lands exactly on v_max.
    """
    v = np.asarray(v, float)
    a = np.asarray(a, float)
    speed = np.linalg.norm(v, axis=-1)
    amag = np.linalg.norm(a, axis=-1)
    cap = params.rho * speed
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(amag > cap, np.where(amag > 0, cap / np.where(amag > 0, amag, 1.0), 0.0), 1.0)
    out = a * scale[..., None]

    # Speed bound: find s in [0, 1] with |v + dt*s*out| = v_max when the full
    # step would overshoot. Quadratic in s; real roots exist while |v| <= v_max.
    dt = params.dt
    new_speed_sq = np.sum((v + dt * out) ** 2, axis=-1)
    over = new_speed_sq > params.v_max**2
    if np.any(over):
        qa = dt**2 * np.sum(out**2, axis=-1)
        qb = 2.0 * dt * np.sum(v * out, axis=-1)
        qc = speed**2 - params.v_max**2
        disc = qb**2 - 4.0 * qa * qc
        ok = over & (qa > 0) & (disc >= 0)
        s = np.zeros_like(qa)
        np.divide(-qb + np.sqrt(np.where(disc >= 0, disc, 0.0)), 2.0 * qa, out=s, where=qa > 0)
        s = np.clip(s, 0.0, 1.0)
        factor = np.where(over, np.where(ok, s, 0.0), 1.0)
        out = out * factor[..., None]
    return out


def clamp_action(
    state: FlockState, action: JointAction, params: DynamicsParameters
) -> JointAction:
    """Project an action onto the feasible set; total and idempotent."""
    if action.n != state.n:
        raise ValueError(f"action has {action.n} agents, state has {state.n}")
    return JointAction(clamp_accelerations(state.velocities, action.accelerations, params))


def neighborhood(state: FlockState, i: int, l: int) -> list[int]:
    """Indices of agent i's l-member neighborhood: i first, then the l-1
    closest agents by Euclidean distance, ties broken by lower index."""
    n = state.n
    if not 0 <= i < n:
        raise ValueError(f"agent index {i} out of range for {n} agents")
    if not 1 <= l <= n:
        raise ValueError(f"neighborhood size {l} out of range [1, {n}]")
    d = np.linalg.norm(state.positions - state.positions[i], axis=1)
    order = np.lexsort((np.arange(n), d))
    others = [int(j) for j in order if j != i]
    return [i] + others[: l - 1]


def local_view(state: FlockState, i: int, local_cost: float) -> LocalView:
    """29-feature view of agent i: self-relative positions and absolute
    velocities of its 7-agent neighborhood, distance-ordered, plus the cost."""
    if state.n < VIEW_SIZE:
        raise ValueError(f"local views require at least {VIEW_SIZE} agents, got {state.n}")
    members = neighborhood(state, i, VIEW_SIZE)
    rel = state.positions[members] - state.positions[i]
    rel[0] = 0.0  # exact zero for the observer
    feat = np.empty(VIEW_FEATURES)
    feat[0 : 4 * VIEW_SIZE : 4] = rel[:, 0]
    feat[1 : 4 * VIEW_SIZE : 4] = rel[:, 1]
    feat[2 : 4 * VIEW_SIZE : 4] = state.velocities[members, 0]
    feat[3 : 4 * VIEW_SIZE : 4] = state.velocities[members, 1]
    feat[-1] = local_cost
    return LocalView(feat)


def sample_initial_state(
    n: int,
    position_range: tuple[float, float],
    velocity_range: tuple[float, float],
    rng: np.random.Generator,
) -> FlockState:
    """Draw every position/velocity component uniformly from its range."""
    if n < 1:
        raise ValueError("need at least one agent")
    for name, (lo, hi) in (("position", position_range), ("velocity", velocity_range)):
        if hi < lo:
            raise ValueError(f"empty {name} range [{lo}, {hi}]")
    plo, phi = position_range
    vlo, vhi = velocity_range
    positions = rng.uniform(plo, phi, size=(n, 2)) if phi > plo else np.full((n, 2), plo)
    velocities = rng.uniform(vlo, vhi, size=(n, 2)) if vhi > vlo else np.full((n, 2), vlo)
    return FlockState(positions, velocities)
