"""Compiled RK4 kernels for the invader-driven replicator."""

import numpy as np
from numba import njit

STATUS_RUNNING = -1
STATUS_T_MAX = 0
STATUS_CONVERGED = 1
STATUS_ERROR = 2


@njit(cache=True)
def _rhs_into(z, lam, theta, out):
    n = z.shape[0]
    q = 0.0
    for i in range(n):
        q += lam[i] * (1.0 - z[i]) * z[i]
    for i in range(n):
        out[i] = theta * z[i] * (lam[i] * (1.0 - z[i]) - q)


@njit(cache=True)
def rk4_advance(z, lam, theta, h, max_steps, conv_tol, conv_window, calm, simplex_tol):
    """Advance ``z`` in place by up to ``max_steps`` RK4 steps.

    Returns ``(steps_taken, calm, status)``. ``calm`` counts consecutive
    steps with ``max|dz| < conv_tol`` and is carried across calls.
    """
    n = z.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    for step in range(max_steps):
        _rhs_into(z, lam, theta, k1)
        m = 0.0
        for i in range(n):
            a = abs(k1[i])
            if a > m:
                m = a
        if m < conv_tol:
            calm += 1
            if calm >= conv_window:
                return step, calm, STATUS_CONVERGED
        else:
            calm = 0
        for i in range(n):
            tmp[i] = z[i] + 0.5 * h * k1[i]
        _rhs_into(tmp, lam, theta, k2)
        for i in range(n):
            tmp[i] = z[i] + 0.5 * h * k2[i]
        _rhs_into(tmp, lam, theta, k3)
        for i in range(n):
            tmp[i] = z[i] + h * k3[i]
        _rhs_into(tmp, lam, theta, k4)
        s = 0.0
        for i in range(n):
            v = z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if v < -simplex_tol or v != v:
                return step, calm, STATUS_ERROR
            if v < 0.0:
                v = 0.0
            tmp[i] = v
            s += v
        for i in range(n):
            z[i] = tmp[i] / s
    return max_steps, calm, STATUS_RUNNING


@njit(cache=True)
def rk4_record(z, lam, theta, h, max_steps, record_every, conv_tol, conv_window, calm,
               simplex_tol, out):
    """Like :func:`rk4_advance`, storing ``z`` every ``record_every`` steps.

    Stops when ``out`` is full. Returns ``(steps_taken, n_recorded, calm, status)``;
    ``steps_taken`` is always a multiple of ``record_every`` unless the run
    converged, failed or exhausted ``max_steps``.
    """
    done = 0
    rec = 0
    cap = out.shape[0]
    while done < max_steps and rec < cap:
        chunk = record_every
        if max_steps - done < chunk:
            chunk = max_steps - done
        taken, calm, status = rk4_advance(z, lam, theta, h, chunk, conv_tol, conv_window,
                                          calm, simplex_tol)
        done += taken
        if taken > 0:
            for i in range(z.shape[0]):
                out[rec, i] = z[i]
            rec += 1
        if status != STATUS_RUNNING:
            return done, rec, calm, status
    return done, rec, calm, STATUS_RUNNING
