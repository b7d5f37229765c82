"""Fully resolved reference simulation of the coupled slow-fast system.

The whole interval ``[0, T]`` is integrated at the fast step ``k``: an explicit
two-step Adams-Bashforth update of ``u`` using pointwise reactions, followed by
a Crank-Nicolson step of ``v`` with ``lambda`` taken at the new ``u``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels
from .errors import InfeasibleCost, InvariantViolation
from .micro import MicroGrid, PeriodicSolverConfig, solve_periodic
from .macro import mean_forcing_guess
from .model import FastSystem, ScaleParams

__all__ = [
    "ResolvedTrajectory",
    "run_resolved",
    "periodic_initial",
    "closed_form_slow_f0",
    "periodic_tracking_gap",
    "MAX_RESOLVED_STEPS",
]

MAX_RESOLVED_STEPS = 1e9


@dataclass(eq=False)
class ResolvedTrajectory:
    """Strided samples of a resolved run plus online error functionals.

    Samples are taken every ``stride`` fast steps; the last computed state is
    always included, so ``final`` is ``u(T)`` for a completed run.

    ``averaging_error`` is ``max_t |int_t^{t+1} R(U(t), v) - R(u, v) ds|`` with
    ``U(t)`` the one-period mean of ``u``; ``oscillation`` is
    ``max_t |u(t) - U(t)|``. Both are accumulated at full resolution over
    windows starting every ``probe_every`` fast steps.
    """

    step: float
    stride: int
    times: NDArray[np.float64]
    slow: NDArray[np.float64]
    fast: NDArray[np.float64]
    n_steps: int
    status: str = "completed"
    failed_step: int | None = None
    averaging_error: float = 0.0
    oscillation: float = 0.0
    wall_time: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def cn_steps(self) -> int:
        return self.n_steps

    @property
    def final(self) -> float:
        return float(self.slow[-1])


def _integral_ratio(a: float, b: float, what: str) -> int:
    n = round(a / b)
    if n < 1 or abs(n * b - a) > 1e-9 * a:
        raise InvariantViolation(what, f"{a!r}/{b!r} is not an integer")
    return int(n)


def periodic_initial(sys: FastSystem, u: float, M: int, tol_P: float = 1e-13) -> NDArray[np.float64]:
    """Converged periodic CN initial value at ``u`` (averaged solver, tight tolerance)."""
    cfg = PeriodicSolverConfig(tol_P=tol_P, max_cycles=10_000, method="averaged")
    return solve_periodic(sys, u, mean_forcing_guess(sys, u), MicroGrid(M), cfg).initial


def run_resolved(
    sys: FastSystem,
    scale: ScaleParams,
    k: float,
    v_init: ArrayLike | None = None,
    stride: int = 1,
    probe_every: int | None = None,
    max_steps: float = MAX_RESOLVED_STEPS,
) -> ResolvedTrajectory:
    """Integrate the coupled system over ``[0, T_end]`` at fast step ``k``.

    ``1/k`` and ``T_end/k`` must both be integers. ``v_init`` defaults to the
    periodic CN initial value at ``u0``. Runs needing more than ``max_steps``
    fast steps are refused with :class:`InfeasibleCost` before any work.
    """
    projected = scale.T_end / k
    if projected > max_steps:
        raise InfeasibleCost(projected, max_steps)
    M = _integral_ratio(1.0, k, "run_resolved.k")
    L = _integral_ratio(scale.T_end, k, "run_resolved.T_end/k")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if probe_every is None:
        probe_every = max(1, M // 4)

    if v_init is None:
        v0 = periodic_initial(sys, scale.u0, M)
    else:
        v0 = np.atleast_1d(np.asarray(v_init, dtype=float))
        if v0.shape != (sys.dim,):
            raise ValueError(f"v_init of shape {v0.shape} does not match dim={sys.dim}")

    u_max = min(scale.u_max, sys.u_max)
    t0 = time.perf_counter()
    u_s, v_s, n_done, exhausted, avg_err, osc, u_last, v_last = _kernels.resolved_imex(
        float(scale.epsilon),
        1.0 / M,
        L,
        float(scale.u0),
        float(u_max),
        np.ascontiguousarray(v0),
        sys.decay_coeff_matrix(),
        sys.forcing_samples(M),
        np.ascontiguousarray(sys.weights),
        int(stride),
        int(probe_every),
    )
    wall = time.perf_counter() - t0
    steps = np.arange(u_s.size) * stride
    if n_done % stride:
        # always keep the last computed state
        u_s = np.append(u_s, u_last)
        v_s = np.vstack([v_s, v_last])
        steps = np.append(steps, n_done)
    times = steps / M
    return ResolvedTrajectory(
        step=1.0 / M,
        stride=stride,
        times=times,
        slow=u_s,
        fast=v_s,
        n_steps=int(n_done),
        status="domain_exhausted" if exhausted else "completed",
        failed_step=int(n_done) + 1 if exhausted else None,
        averaging_error=float(avg_err),
        oscillation=float(osc),
        wall_time=wall,
    )


def closed_form_slow_f0(scale: ScaleParams, t):
    """Exact slow solution for ``f = 0`` (so ``v = 0``): ``u' = eps/(1+u)``.

    ``(1 + u)^2 = (1 + u0)^2 + 2 eps t``.
    """
    t = np.asarray(t, dtype=float)
    out = np.sqrt((1.0 + scale.u0) ** 2 + 2.0 * scale.epsilon * t) - 1.0
    return float(out) if out.ndim == 0 else out


def periodic_tracking_gap(
    sys: FastSystem,
    scale: ScaleParams,
    k: float,
    n_probes: int = 400,
    tol_P: float = 1e-13,
) -> float:
    """Sup-distance between the resolved fast state and the frozen periodic family.

    Runs the resolved system from the periodic initial value at ``u0`` and, at
    ``n_probes`` evenly spaced nodes ``t``, compares ``v(t)`` with the discrete
    periodic solution at ``u(t)`` evaluated at phase ``t mod 1``. Returns the
    largest Euclidean gap.
    """
    M = _integral_ratio(1.0, k, "periodic_tracking_gap.k")
    L = _integral_ratio(scale.T_end, k, "periodic_tracking_gap.T_end/k")
    stride = max(1, L // n_probes)
    traj = run_resolved(sys, scale, k, stride=stride)

    grid = MicroGrid(M)
    cfg = PeriodicSolverConfig(tol_P=tol_P, max_cycles=10_000, method="averaged")
    guess = traj.fast[0]
    gap = 0.0
    for q in range(traj.slow.size):
        sol = solve_periodic(sys, float(traj.slow[q]), guess, grid, cfg)
        guess = sol.initial
        phase = int(round(traj.times[q] * M)) % M
        gap = max(gap, float(np.linalg.norm(traj.fast[q] - sol.samples[phase])))
    return gap


def projected_resolved_steps(T_end: float, k: float) -> float:
    """``E_fwd = T/k``."""
    return T_end / k if k > 0 else math.inf
