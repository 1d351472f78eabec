"""Compiled scalar right-hand sides and fixed-step integration loops.

Everything here operates on plain floats and a flat parameter vector so it can
be compiled with numba. The public, typed API lives in :mod:`cyclesim.model`
and :mod:`cyclesim.integrator`.

Parameter vector layout (see ``Params.as_array``)::

    0 tau_h  1 tau_s  2 tau_y  3 beta1  4 beta2  5 k1  6 k2
    7 epsilon  8 c1  9 c2  10 s_star  11 b
"""

import math

import numpy as np
from numba import njit

TAU_H, TAU_S, TAU_Y, BETA1, BETA2, K1, K2, EPS, C1, C2, S_STAR, B = range(12)

EULER = 0
HEUN = 1

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_BOUND = 2

# exp(50) ~ 5e21; physical |z| stays below ~2.
Z_LIMIT = 50.0
BOUND_ABORT = 1e-6


@njit(cache=True)
def sentiment_rate(s, h, tau_s, beta1, beta2):
    return (-s + math.tanh(beta1 * s + beta2 * h)) / tau_s


@njit(cache=True)
def analyst_rate(h, pdot, ydot, xi, tau_h, k1, k2, eps):
    return (-h + math.tanh(k1 * pdot + k2 * ydot + eps + xi)) / tau_h


@njit(cache=True)
def price_rate(sdot, s, c1, c2, s_star):
    return c1 * sdot + c2 * (s - s_star)


@njit(cache=True)
def output_rate(z, tau_y, b):
    return (math.exp(z) - b) / tau_y


@njit(cache=True)
def full_rhs(h, s, p, y, xi, P):
    # Cascade order matters: pdot needs sdot, hdot needs pdot and ydot.
    ydot = output_rate(p - y, P[TAU_Y], P[B])
    sdot = sentiment_rate(s, h, P[TAU_S], P[BETA1], P[BETA2])
    pdot = price_rate(sdot, s, P[C1], P[C2], P[S_STAR])
    hdot = analyst_rate(h, pdot, ydot, xi, P[TAU_H], P[K1], P[K2], P[EPS])
    return hdot, sdot, pdot, ydot


@njit(cache=True)
def bounded_rhs(h, s, z, xi, P):
    ydot = output_rate(z, P[TAU_Y], P[B])
    sdot = sentiment_rate(s, h, P[TAU_S], P[BETA1], P[BETA2])
    pdot = price_rate(sdot, s, P[C1], P[C2], P[S_STAR])
    hdot = analyst_rate(h, pdot, ydot, xi, P[TAU_H], P[K1], P[K2], P[EPS])
    return hdot, sdot, pdot - ydot


@njit(cache=True)
def step_full(h, s, p, y, xi, dt, scheme, P):
    a0, a1, a2, a3 = full_rhs(h, s, p, y, xi, P)
    if scheme == EULER:
        return h + dt * a0, s + dt * a1, p + dt * a2, y + dt * a3
    b0, b1, b2, b3 = full_rhs(h + dt * a0, s + dt * a1, p + dt * a2,
                              y + dt * a3, xi, P)
    half = 0.5 * dt
    return (h + half * (a0 + b0), s + half * (a1 + b1),
            p + half * (a2 + b2), y + half * (a3 + b3))


@njit(cache=True)
def step_bounded(h, s, z, xi, dt, scheme, P):
    a0, a1, a2 = bounded_rhs(h, s, z, xi, P)
    if scheme == EULER:
        return h + dt * a0, s + dt * a1, z + dt * a2
    b0, b1, b2 = bounded_rhs(h + dt * a0, s + dt * a1, z + dt * a2, xi, P)
    half = 0.5 * dt
    return h + half * (a0 + b0), s + half * (a1 + b1), z + half * (a2 + b2)


@njit(cache=True)
def integrate_full(x0, xi, dt, scheme, stride, skip, P):
    """Advance (h, s, p, y) over ``xi.size`` steps.

    Returns ``(states, xi_rec, status, fail_step, last_state)``. A record is
    taken after every ``stride`` steps once ``skip`` steps have elapsed;
    ``xi_rec`` holds the mean forcing over each recorded block.
    """
    n = xi.size
    n_rec = (n - skip) // stride
    out = np.empty((n_rec, 4))
    xi_rec = np.empty(n_rec)
    h, s, p, y = x0[0], x0[1], x0[2], x0[3]
    acc = 0.0
    k = 0
    for i in range(n):
        if not (p - y <= Z_LIMIT):
            return out[:k], xi_rec[:k], STATUS_DIVERGED, i, np.array([h, s, p, y])
        h, s, p, y = step_full(h, s, p, y, xi[i], dt, scheme, P)
        if abs(h) > 1.0 + BOUND_ABORT or abs(s) > 1.0 + BOUND_ABORT:
            return out[:k], xi_rec[:k], STATUS_BOUND, i, np.array([h, s, p, y])
        acc += xi[i]
        if (i + 1) % stride == 0:
            if i + 1 > skip:
                out[k, 0] = h
                out[k, 1] = s
                out[k, 2] = p
                out[k, 3] = y
                xi_rec[k] = acc / stride
                k += 1
            acc = 0.0
    return out, xi_rec, STATUS_OK, n, np.array([h, s, p, y])


@njit(cache=True)
def integrate_bounded(x0, xi, dt, scheme, stride, skip, P):
    """Bounded-formulation counterpart of :func:`integrate_full`."""
    n = xi.size
    n_rec = (n - skip) // stride
    out = np.empty((n_rec, 3))
    xi_rec = np.empty(n_rec)
    h, s, z = x0[0], x0[1], x0[2]
    acc = 0.0
    k = 0
    for i in range(n):
        if not (z <= Z_LIMIT):
            return out[:k], xi_rec[:k], STATUS_DIVERGED, i, np.array([h, s, z])
        h, s, z = step_bounded(h, s, z, xi[i], dt, scheme, P)
        if abs(h) > 1.0 + BOUND_ABORT or abs(s) > 1.0 + BOUND_ABORT:
            return out[:k], xi_rec[:k], STATUS_BOUND, i, np.array([h, s, z])
        acc += xi[i]
        if (i + 1) % stride == 0:
            if i + 1 > skip:
                out[k, 0] = h
                out[k, 1] = s
                out[k, 2] = z
                xi_rec[k] = acc / stride
                k += 1
            acc = 0.0
    return out, xi_rec, STATUS_OK, n, np.array([h, s, z])


# ---------------------------------------------------------------------------
# In-plane flow used for phase portraits.  z is slaved to z = C + c1*s and the
# velocity component normal to the plane is dropped.


@njit(cache=True)
def plane_rhs(s, h, C, P):
    hdot, sdot, _ = bounded_rhs(h, s, C + P[C1] * s, 0.0, P)
    return sdot, hdot


@njit(cache=True)
def plane_rk4(s, h, C, dt, P):
    a0, a1 = plane_rhs(s, h, C, P)
    b0, b1 = plane_rhs(s + 0.5 * dt * a0, h + 0.5 * dt * a1, C, P)
    c0, c1 = plane_rhs(s + 0.5 * dt * b0, h + 0.5 * dt * b1, C, P)
    d0, d1 = plane_rhs(s + dt * c0, h + dt * c1, C, P)
    return (s + dt / 6.0 * (a0 + 2.0 * b0 + 2.0 * c0 + d0),
            h + dt / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1))


@njit(cache=True)
def plane_basin_labels(s0, h0, C, attractors, radius, dt, max_steps, P):
    """Label each start point by the index of the attractor it reaches.

    ``attractors`` is an (m, 2) array of (s, h). Label -1 means no attractor
    was reached within ``max_steps``.
    """
    n = s0.size
    labels = np.full(n, -1, dtype=np.int64)
    r2 = radius * radius
    for j in range(n):
        s = s0[j]
        h = h0[j]
        for _ in range(max_steps):
            hit = -1
            for a in range(attractors.shape[0]):
                ds = s - attractors[a, 0]
                dh = h - attractors[a, 1]
                if ds * ds + dh * dh < r2:
                    hit = a
                    break
            if hit >= 0:
                labels[j] = hit
                break
            s, h = plane_rk4(s, h, C, dt, P)
    return labels


@njit(cache=True)
def plane_path(s, h, C, dt, n_steps, window, P):
    """RK4 path in the plane; negative ``dt`` runs time backward.

    Stops at the first point outside ``window = (s_lo, s_hi, h_lo, h_hi)``;
    that point is kept so callers can clip it onto the boundary.
    """
    out = np.empty((n_steps + 1, 2))
    out[0, 0] = s
    out[0, 1] = h
    for i in range(n_steps):
        s, h = plane_rk4(s, h, C, dt, P)
        out[i + 1, 0] = s
        out[i + 1, 1] = h
        if (s < window[0] or s > window[1] or h < window[2] or h > window[3]
                or not (abs(s) < 10.0 and abs(h) < 10.0)):
            return out[:i + 2]
    return out


@njit(cache=True)
def bounded_path_rk4(h, s, z, dt, n_steps, P):
    """Noiseless RK4 path of the full 3-D bounded system, (n+1, 3) array."""
    out = np.empty((n_steps + 1, 3))
    out[0, 0] = h
    out[0, 1] = s
    out[0, 2] = z
    for i in range(n_steps):
        a0, a1, a2 = bounded_rhs(h, s, z, 0.0, P)
        b0, b1, b2 = bounded_rhs(h + 0.5 * dt * a0, s + 0.5 * dt * a1,
                                 z + 0.5 * dt * a2, 0.0, P)
        c0, c1, c2 = bounded_rhs(h + 0.5 * dt * b0, s + 0.5 * dt * b1,
                                 z + 0.5 * dt * b2, 0.0, P)
        d0, d1, d2 = bounded_rhs(h + dt * c0, s + dt * c1, z + dt * c2, 0.0, P)
        h = h + dt / 6.0 * (a0 + 2.0 * b0 + 2.0 * c0 + d0)
        s = s + dt / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
        z = z + dt / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
        out[i + 1, 0] = h
        out[i + 1, 1] = s
        out[i + 1, 2] = z
    return out
