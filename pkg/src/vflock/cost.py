"""V-formation fitness metrics and their combination into a single cost.

Three metrics score a flock state:

* clear view (CV): fraction of each agent's forward vision cone blocked by
  other agents' wings, summed over agents; 0 when every view is clear.
* velocity matching (VM): sum over agent pairs of squared normalized
  velocity differences; 0 when all velocities agree.
* upwash benefit (UB): each agent's shortfall from full aerodynamic benefit,
  where benefit follows a Gaussian bump behind and beside a leader's
  wingtips and a smooth sign-like factor turns it negative directly behind
  (the downwash region).

The combined cost is ``J = CV^2 + VM^2 + (UB - 1)^2`` so that J == 0 exactly
at a perfect V: clear views, matched velocities, and everyone but the leader
at full benefit. A state counts as a V-formation when J <= phi.

All metric kernels are batched over a leading axis so optimizers can score
whole candidate swarms in one call; the scalar API wraps batch size 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import _kernels
from .flock import FlockState, neighborhood

logger = logging.getLogger(__name__)

_TWO_PI = 2.0 * math.pi


def _unit_rows(v):
    """Unit vectors along the last axis; zero rows stay zero."""
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(norm > 0, v / np.where(norm > 0, norm, 1.0), 0.0)
    return out, norm[..., 0]


@dataclass(frozen=True)
class CostParameters:
    """Geometry and shape constants for the three metrics.

    theta is the full opening angle of the forward vision cone, w the wing
    span, alpha the attenuation applied to upwash in the outer wing band,
    mu1/sigma1 the mean and shape of the Gaussian upwash bump (mu1 defaults
    to the sweet spot ((12+pi)w/16, 1)), and phi the cost threshold under
    which a state counts as a V-formation.
    """

    theta: float = math.pi / 4.0
    w: float = 1.0
    alpha: float = 1.0
    mu1: tuple[float, float] = None  # default derived from w
    sigma1: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 0.0), (0.0, 4.0))
    phi: float = 1e-3

    def __post_init__(self):
        if not 0 < self.theta < _TWO_PI:
            raise ValueError("theta must lie in (0, 2*pi)")
        if self.w <= 0:
            raise ValueError("wing span must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.phi <= 0:
            raise ValueError("phi must be positive")
        mu = self.mu1
        if mu is None:
            mu = ((12.0 + math.pi) * self.w / 16.0, 1.0)
        object.__setattr__(self, "mu1", (float(mu[0]), float(mu[1])))
        sig = np.array(self.sigma1, dtype=float)
        if sig.shape != (2, 2) or not np.allclose(sig, sig.T):
            raise ValueError("sigma1 must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(sig)[0] <= 0:
            raise ValueError("sigma1 must be positive definite")
        object.__setattr__(self, "sigma1", ((sig[0, 0], sig[0, 1]), (sig[1, 0], sig[1, 1])))
        object.__setattr__(self, "_sigma1_inv", np.linalg.inv(sig))

    @property
    def sigma1_inv(self) -> np.ndarray:
        return self._sigma1_inv

    @property
    def downwash_band(self) -> float:
        """Half-width (4-pi)w/8 of the inner band directly behind an agent."""
        return (4.0 - math.pi) * self.w / 8.0


@dataclass(frozen=True)
class CostBreakdown:
    """The three metric values and their combination J."""

    cv: float
    vm: float
    ub: float
    j: float


# ---------------------------------------------------------------------------
# batched metric kernels: positions/velocities shaped (B, n, 2)
# ---------------------------------------------------------------------------

def _wrap_angle(a):
    return np.arctan2(np.sin(a), np.cos(a))


def clear_view_batch(x, v, params: CostParameters) -> np.ndarray:
    """Total blocked-view fraction per batch entry.

    Each agent i looks along its velocity (along +x when stationary) through
    a cone of full angle theta. Agent j's wing is a segment of length w
    centered at x_j, perpendicular to v_j. The blocked set for i is the
    union over j of the angular interval the wing subtends, intersected
    with the cone; its measure is divided by theta and summed over i.
    """
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    B, n, _ = x.shape
    if n == 1:
        return np.zeros(B)
    heading, speed = _unit_rows(v)
    heading = np.where(speed[..., None] > 0, heading, [1.0, 0.0])
    axis = np.arctan2(heading[..., 1], heading[..., 0])  # (B, n) cone axes
    wing = np.stack([-heading[..., 1], heading[..., 0]], axis=-1)  # perp

    d = x[:, None, :, :] - x[:, :, None, :]  # d[b, i, j] = x_j - x_i
    half = 0.5 * params.w
    tips1 = d + half * wing[:, None, :, :]
    tips2 = d - half * wing[:, None, :, :]
    a1 = np.arctan2(tips1[..., 1], tips1[..., 0])
    a2 = np.arctan2(tips2[..., 1], tips2[..., 0])
    span = _wrap_angle(a2 - a1)  # |span| <= pi: arc swept by the segment
    lo = np.minimum(a1, a1 + span) - axis[:, :, None]
    hi = np.maximum(a1, a1 + span) - axis[:, :, None]

    gamma = 0.5 * params.theta
    pieces_lo = []
    pieces_hi = []
    eye = np.eye(n, dtype=bool)
    for shift in (-_TWO_PI, 0.0, _TWO_PI):
        plo = np.maximum(lo + shift, -gamma)
        phi_ = np.minimum(hi + shift, gamma)
        empty = (phi_ <= plo) | eye[None, :, :]
        pieces_lo.append(np.where(empty, -gamma, plo))
        pieces_hi.append(np.where(empty, -gamma, phi_))
    L = np.concatenate(pieces_lo, axis=2)  # (B, n, 3n)
    H = np.concatenate(pieces_hi, axis=2)

    # Union measure per (batch, viewer): sweep intervals in lo order.
    order = np.argsort(L, axis=2)
    L = np.take_along_axis(L, order, axis=2)
    H = np.take_along_axis(H, order, axis=2)
    covered = np.zeros((B, n))
    cursor = np.full((B, n), -np.inf)
    for m in range(L.shape[2]):
        covered += np.maximum(0.0, H[:, :, m] - np.maximum(L[:, :, m], cursor))
        cursor = np.maximum(cursor, H[:, :, m])
    return covered.sum(axis=1) / params.theta


def velocity_matching_batch(v) -> np.ndarray:
    """Sum over unordered pairs of (|v_i - v_j| / (|v_i| + |v_j|))^2.

    A pair whose speeds are both zero contributes 0 by convention.
    """
    v = np.asarray(v, float)
    B, n, _ = v.shape
    if n == 1:
        return np.zeros(B)
    speed = np.linalg.norm(v, axis=-1)
    diff = np.linalg.norm(v[:, :, None, :] - v[:, None, :, :], axis=-1)
    denom = speed[:, :, None] + speed[:, None, :]
    if np.any((denom == 0) & (np.triu(np.ones((n, n), bool), 1)[None])):
        logger.debug("velocity matching: zero-speed pair contributes 0 by convention")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, diff / np.where(denom > 0, denom, 1.0), 0.0)
    mask = np.triu(np.ones((n, n), bool), 1)
    return np.sum(ratio**2 * mask[None, :, :], axis=(1, 2))


def upwash_matrix_batch(x, v, params: CostParameters) -> np.ndarray:
    """Pairwise benefit UB[b, i, j] received by agent i from agent j.

    h is the offset of x_j - x_i along i's wing axis, g along i's heading.
    The benefit is S(|h|) * G(|h|, |g|) with S an erf ramp that is negative
    inside the band |h| < (4-pi)w/8 (downwash) and the Gaussian G peaked at
    mu1; the outer band is attenuated by alpha. Zero when j is not ahead
    (g <= 0) or when agent i has zero velocity.
    """
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    B, n, _ = x.shape
    heading, speed = _unit_rows(v)
    if np.any(speed == 0):
        logger.debug("upwash: zero-velocity agent receives no benefit (wing axis undefined)")
    wing = np.stack([-heading[..., 1], heading[..., 0]], axis=-1)
    d = x[:, None, :, :] - x[:, :, None, :]  # d[b, i, j] = x_j - x_i
    h = np.einsum("bijc,bic->bij", d, wing)
    g = np.einsum("bijc,bic->bij", d, heading)
    habs = np.abs(h)
    band = params.downwash_band
    s_factor = erf(2.0 * math.sqrt(2.0) * (habs - band))
    amp = np.where(habs >= band, params.alpha, 1.0)
    z0 = habs - params.mu1[0]
    z1 = np.abs(g) - params.mu1[1]
    inv = params.sigma1_inv
    quad = inv[0, 0] * z0**2 + 2.0 * inv[0, 1] * z0 * z1 + inv[1, 1] * z1**2
    gauss = np.exp(-0.5 * quad)
    ub = np.where(g > 0, amp * s_factor * gauss, 0.0)
    ub = np.where(speed[:, :, None] > 0, ub, 0.0)  # receiver needs a heading
    ub[:, np.arange(n), np.arange(n)] = 0.0
    return ub


def upwash_cost_batch(x, v, params: CostParameters) -> np.ndarray:
    """Sum over agents of 1 - min(total received benefit, 1)."""
    ub_i = upwash_matrix_batch(x, v, params).sum(axis=2)
    return np.sum(1.0 - np.minimum(ub_i, 1.0), axis=1)


def cost_batch_reference(x, v, params: CostParameters) -> np.ndarray:
    """Vectorized numpy evaluation of the combined cost; reference path."""
    cv = clear_view_batch(x, v, params)
    vm = velocity_matching_batch(v)
    ub = upwash_cost_batch(x, v, params)
    return cv**2 + vm**2 + (ub - 1.0) ** 2


def cost_batch(x, v, params: CostParameters) -> np.ndarray:
    """Combined cost J for a batch of states; the optimizer objective."""
    if not _kernels.HAVE_NUMBA:
        return cost_batch_reference(x, v, params)
    x = np.ascontiguousarray(x, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    inv = params.sigma1_inv
    out = np.empty(x.shape[0])
    return _kernels.cost_kernel(
        x, v, params.theta, params.w, params.alpha,
        params.mu1[0], params.mu1[1], inv[0, 0], inv[0, 1], inv[1, 1],
        params.downwash_band, out,
    )


# ---------------------------------------------------------------------------
# scalar API over FlockState
# ---------------------------------------------------------------------------

def _member_arrays(state: FlockState, members):
    idx = list(members)
    if not idx:
        raise ValueError("member set must be nonempty")
    if len(set(idx)) != len(idx):
        raise ValueError("member set contains duplicates")
    return state.positions[idx][None], state.velocities[idx][None]


def clear_view(state: FlockState, params: CostParameters, members=None) -> float:
    members = range(state.n) if members is None else members
    x, v = _member_arrays(state, members)
    return float(clear_view_batch(x, v, params)[0])


def velocity_matching(state: FlockState, members=None) -> float:
    members = range(state.n) if members is None else members
    _, v = _member_arrays(state, members)
    return float(velocity_matching_batch(v)[0])


def upwash_benefit_pair(i: int, j: int, state: FlockState, params: CostParameters) -> float:
    """Benefit agent i receives from agent j alone."""
    if i == j:
        raise ValueError("upwash benefit requires two distinct agents")
    x, v = _member_arrays(state, [i, j])
    return float(upwash_matrix_batch(x, v, params)[0, 0, 1])


def upwash_cost(state: FlockState, params: CostParameters, members=None) -> float:
    members = range(state.n) if members is None else members
    x, v = _member_arrays(state, members)
    return float(upwash_cost_batch(x, v, params)[0])


def global_cost(state: FlockState, params: CostParameters) -> CostBreakdown:
    """All three metrics over the full flock, combined per J = cv^2 + vm^2 + (ub-1)^2."""
    x, v = state.positions[None], state.velocities[None]
    cv = float(clear_view_batch(x, v, params)[0])
    vm = float(velocity_matching_batch(v)[0])
    ub = float(upwash_cost_batch(x, v, params)[0])
    return CostBreakdown(cv=cv, vm=vm, ub=ub, j=cv**2 + vm**2 + (ub - 1.0) ** 2)


def local_cost(state: FlockState, i: int, params: CostParameters, l: int) -> float:
    """Global-cost formula restricted to agent i's l-member neighborhood."""
    members = neighborhood(state, i, l)
    x, v = _member_arrays(state, members)
    return float(cost_batch(x, v, params)[0])


def make_v_formation(
    n: int,
    params: CostParameters,
    heading=(0.0, 1.0),
    speed: float = 1.0,
) -> FlockState:
    """Reference V: leader at the origin, followers staggered alternately
    left/right, each offset (+-(12+pi)w/16, -1) from its front neighbor in
    that neighbor's (wing, heading) frame; all velocities speed * heading.
    """
    if n < 3:
        raise ValueError("a V-formation needs at least 3 agents")
    if speed <= 0:
        raise ValueError("speed must be positive")
    hvec = np.asarray(heading, float)
    norm = np.linalg.norm(hvec)
    if norm == 0:
        raise ValueError("heading must be nonzero")
    hvec = hvec / norm
    wing = np.array([-hvec[1], hvec[0]])
    lateral = params.mu1[0]
    back = params.mu1[1]
    positions = np.zeros((n, 2))
    for idx in range(1, n):
        depth = (idx + 1) // 2
        side = 1.0 if idx % 2 else -1.0
        positions[idx] = depth * (side * lateral * wing - back * hvec)
    velocities = np.tile(speed * hvec, (n, 1))
    return FlockState(positions, velocities)
