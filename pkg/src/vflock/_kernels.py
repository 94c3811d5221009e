"""JIT-compiled hot loops for cost evaluation and constrained rollouts.

These mirror the vectorized numpy implementations in cost.py and mpc.py;
the numpy versions remain the readable reference and the test suite checks
the two agree. Import of numba is optional: callers fall back to numpy
when it is unavailable.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


_TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True)
def _wrap(a):
    while a > math.pi:
        a -= _TWO_PI
    while a <= -math.pi:
        a += _TWO_PI
    return a


@njit(cache=True, nogil=True)
def cost_kernel(x, v, theta, w, alpha, mu0, mu1, i00, i01, i11, band, out):
    """Combined formation cost for a (B, n, 2) batch of states.

    i00/i01/i11 are the entries of the inverted Gaussian shape matrix;
    band is the inner downwash half-width.
    """
    B, n = x.shape[0], x.shape[1]
    gamma = 0.5 * theta
    max_pieces = 3 * (n - 1)
    plo = np.empty(max_pieces)
    phi_ = np.empty(max_pieces)
    hx = np.empty(n)
    hy = np.empty(n)
    axis = np.empty(n)
    speed = np.empty(n)
    for b in range(B):
        # headings; stationary agents face +x
        for i in range(n):
            vx = v[b, i, 0]
            vy = v[b, i, 1]
            s = math.sqrt(vx * vx + vy * vy)
            speed[i] = s
            if s > 0.0:
                hx[i] = vx / s
                hy[i] = vy / s
            else:
                hx[i] = 1.0
                hy[i] = 0.0
            axis[i] = math.atan2(hy[i], hx[i])

        cv = 0.0
        for i in range(n):
            count = 0
            for j in range(n):
                if j == i:
                    continue
                dx = x[b, j, 0] - x[b, i, 0]
                dy = x[b, j, 1] - x[b, i, 1]
                # wing of j is perpendicular to j's heading
                wx = -hy[j] * 0.5 * w
                wy = hx[j] * 0.5 * w
                a1 = math.atan2(dy + wy, dx + wx)
                a2 = math.atan2(dy - wy, dx - wx)
                span = _wrap(a2 - a1)
                if span >= 0.0:
                    lo = a1 - axis[i]
                    hi = a1 + span - axis[i]
                else:
                    lo = a1 + span - axis[i]
                    hi = a1 - axis[i]
                for shift in (-_TWO_PI, 0.0, _TWO_PI):
                    lo_s = lo + shift
                    hi_s = hi + shift
                    if lo_s < -gamma:
                        lo_s = -gamma
                    if hi_s > gamma:
                        hi_s = gamma
                    if hi_s > lo_s:
                        plo[count] = lo_s
                        phi_[count] = hi_s
                        count += 1
            # insertion sort by interval start, then sweep the union
            for a_i in range(1, count):
                key_lo = plo[a_i]
                key_hi = phi_[a_i]
                k = a_i - 1
                while k >= 0 and plo[k] > key_lo:
                    plo[k + 1] = plo[k]
                    phi_[k + 1] = phi_[k]
                    k -= 1
                plo[k + 1] = key_lo
                phi_[k + 1] = key_hi
            covered = 0.0
            cursor = -1e300
            for k in range(count):
                start = plo[k] if plo[k] > cursor else cursor
                if phi_[k] > start:
                    covered += phi_[k] - start
                if phi_[k] > cursor:
                    cursor = phi_[k]
            cv += covered / theta

        vm = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                denom = speed[i] + speed[j]
                if denom > 0.0:
                    dvx = v[b, i, 0] - v[b, j, 0]
                    dvy = v[b, i, 1] - v[b, j, 1]
                    r = math.sqrt(dvx * dvx + dvy * dvy) / denom
                    vm += r * r

        ub = 0.0
        for i in range(n):
            benefit = 0.0
            if speed[i] > 0.0:
                for j in range(n):
                    if j == i:
                        continue
                    dx = x[b, j, 0] - x[b, i, 0]
                    dy = x[b, j, 1] - x[b, i, 1]
                    g = dx * hx[i] + dy * hy[i]
                    if g <= 0.0:
                        continue
                    h = -dx * hy[i] + dy * hx[i]
                    habs = abs(h)
                    s_factor = math.erf(2.0 * math.sqrt(2.0) * (habs - band))
                    amp = alpha if habs >= band else 1.0
                    z0 = habs - mu0
                    z1 = abs(g) - mu1
                    quad = i00 * z0 * z0 + 2.0 * i01 * z0 * z1 + i11 * z1 * z1
                    benefit += amp * s_factor * math.exp(-0.5 * quad)
            if benefit > 1.0:
                benefit = 1.0
            ub += 1.0 - benefit

        out[b] = cv * cv + vm * vm + (ub - 1.0) * (ub - 1.0)
    return out


@njit(cache=True, nogil=True)
def rollout_kernel(x0, v0, seqs, dt, rho, v_max, theta, w, alpha, mu0, mu1,
                   i00, i01, i11, band, out):
    """Final-state cost of clamped action sequences (B, h, n, 2) from one state."""
    B, h, n = seqs.shape[0], seqs.shape[1], seqs.shape[2]
    x = np.empty((1, n, 2))
    v = np.empty((1, n, 2))
    for b in range(B):
        for i in range(n):
            x[0, i, 0] = x0[i, 0]
            x[0, i, 1] = x0[i, 1]
            v[0, i, 0] = v0[i, 0]
            v[0, i, 1] = v0[i, 1]
        for t in range(h):
            for i in range(n):
                vx = v[0, i, 0]
                vy = v[0, i, 1]
                s = math.sqrt(vx * vx + vy * vy)
                ax = seqs[b, t, i, 0]
                ay = seqs[b, t, i, 1]
                amag = math.sqrt(ax * ax + ay * ay)
                cap = rho * s
                if amag > cap:
                    if amag > 0.0:
                        scale = cap / amag
                        ax *= scale
                        ay *= scale
                    else:
                        ax = 0.0
                        ay = 0.0
                nvx = vx + dt * ax
                nvy = vy + dt * ay
                if nvx * nvx + nvy * nvy > v_max * v_max:
                    qa = dt * dt * (ax * ax + ay * ay)
                    qb = 2.0 * dt * (vx * ax + vy * ay)
                    qc = s * s - v_max * v_max
                    disc = qb * qb - 4.0 * qa * qc
                    factor = 0.0
                    if qa > 0.0 and disc >= 0.0:
                        factor = (-qb + math.sqrt(disc)) / (2.0 * qa)
                        if factor < 0.0:
                            factor = 0.0
                        elif factor > 1.0:
                            factor = 1.0
                    ax *= factor
                    ay *= factor
                x[0, i, 0] += dt * vx
                x[0, i, 1] += dt * vy
                v[0, i, 0] = vx + dt * ax
                v[0, i, 1] = vy + dt * ay
        cost_kernel(x, v, theta, w, alpha, mu0, mu1, i00, i01, i11, band, out[b : b + 1])
    return out
