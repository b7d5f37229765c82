"""Compiled inner loops.

Both recurrences are strictly sequential, so they are written as plain loops
and compiled with numba. Everything here works on raw arrays; argument
checking happens in the calling modules.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def cn_cycle(lam, fs, v0, k):
    """One Crank-Nicolson sweep over a period for ``v' + lam v = f``.

    ``fs`` has shape ``(M+1, dim)`` (forcing at the nodes), ``lam`` and ``v0``
    shape ``(dim,)``. Returns the ``(M+1, dim)`` node values.
    """
    M = fs.shape[0] - 1
    dim = v0.shape[0]
    out = np.empty((M + 1, dim))
    for i in range(dim):
        out[0, i] = v0[i]
    for i in range(dim):
        lo = 1.0 - 0.5 * k * lam[i]
        hi = 1.0 + 0.5 * k * lam[i]
        v = v0[i]
        for m in range(1, M + 1):
            v = (lo * v + 0.5 * k * (fs[m - 1, i] + fs[m, i])) / hi
            out[m, i] = v
    return out


@njit(cache=True)
def _poly(coeffs, u):
    acc = 0.0
    for j in range(coeffs.shape[0] - 1, -1, -1):
        acc = acc * u + coeffs[j]
    return acc


@njit(cache=True)
def _react(u, s):
    return 1.0 / ((1.0 + u) * (1.0 + s * s))


@njit(cache=True)
def resolved_imex(eps, k, n_steps, u0, u_max, v0, coeffs, fs, weights, stride, probe_every):
    """Fully resolved IMEX run: AB2 (Euler first) on ``u``, CN on ``v``.

    Per step the slow update uses the pointwise reactions at the two previous
    nodes, then the fast CN step uses ``lambda`` at the freshly updated ``u``.

    Also tracks online, over windows ``[t_j, t_j + 1]`` with ``j`` a multiple of
    ``probe_every``:

    * ``avg_err``: max |int_t^{t+1} R(U(t), v(s)) - R(u(s), v(s)) ds| where
      ``U(t)`` is the window mean of ``u`` (trapezoid rule),
    * ``osc``: max |u(t) - U(t)|.

    Returns ``(u_store, v_store, n_done, exhausted, avg_err, osc, u_last, v_last)``.
    """
    M = fs.shape[0] - 1
    dim = v0.shape[0]
    n_store = n_steps // stride + 1
    u_store = np.empty(n_store)
    v_store = np.empty((n_store, dim))

    v = v0.copy()
    u = u0
    s = 0.0
    for i in range(dim):
        s += weights[i] * v[i]
    r_prev = _react(u, s)
    r_prev2 = 0.0

    u_store[0] = u
    for i in range(dim):
        v_store[0, i] = v[i]

    ring_u = np.empty(M + 1)
    ring_s = np.empty(M + 1)
    ring_u[0] = u
    ring_s[0] = s
    avg_err = 0.0
    osc = 0.0

    n_done = 0
    exhausted = False
    for m in range(1, n_steps + 1):
        if m == 1:
            u_new = u + k * eps * r_prev
        else:
            u_new = u + k * eps * (1.5 * r_prev - 0.5 * r_prev2)
        if u_new > u_max or u_new < 0.0:
            exhausted = True
            break
        u = u_new
        j = (m - 1) % M
        s = 0.0
        for i in range(dim):
            lam = _poly(coeffs[i], u)
            v[i] = ((1.0 - 0.5 * k * lam) * v[i] + 0.5 * k * (fs[j, i] + fs[j + 1, i])) / (1.0 + 0.5 * k * lam)
            s += weights[i] * v[i]
        r_prev2 = r_prev
        r_prev = _react(u, s)
        n_done = m

        slot = m % (M + 1)
        ring_u[slot] = u
        ring_s[slot] = s
        if m >= M and (m - M) % probe_every == 0:
            # window nodes m-M .. m
            first = (m - M) % (M + 1)
            mean_u = 0.5 * (ring_u[first] + ring_u[slot])
            for q in range(1, M):
                mean_u += ring_u[(m - M + q) % (M + 1)]
            mean_u /= M
            diff = 0.5 * (
                _react(mean_u, ring_s[first]) - _react(ring_u[first], ring_s[first])
                + _react(mean_u, ring_s[slot]) - _react(ring_u[slot], ring_s[slot])
            )
            for q in range(1, M):
                idx = (m - M + q) % (M + 1)
                diff += _react(mean_u, ring_s[idx]) - _react(ring_u[idx], ring_s[idx])
            diff = abs(diff / M)
            if diff > avg_err:
                avg_err = diff
            dev = abs(ring_u[first] - mean_u)
            if dev > osc:
                osc = dev

        if m % stride == 0:
            q = m // stride
            u_store[q] = u
            for i in range(dim):
                v_store[q, i] = v[i]

    n_kept = n_done // stride + 1
    return u_store[:n_kept], v_store[:n_kept], n_done, exhausted, avg_err, osc, u, v
