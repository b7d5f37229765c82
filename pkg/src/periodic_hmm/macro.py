"""Explicit temporal multiscale method for the slow variable.

Per macro step ``T_{n-1} -> T_n``: solve the periodic micro problem at the
frozen value ``U_{n-1}`` (warm-started from the previous periodic initial
value), average the reaction over the period, then advance ``U`` with forward
Euler (first step) or two-step Adams-Bashforth.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainExhausted, InvariantViolation, MultiscaleError, NonConvergence
from .micro import MicroGrid, PeriodicSolverConfig, averaged_reaction, solve_periodic
from .model import FastSystem, ScaleParams

__all__ = [
    "MacroGrid",
    "MacroTrajectory",
    "euler_bootstrap",
    "ab2_step",
    "run_multiscale",
    "mean_forcing_guess",
]


@dataclass(frozen=True)
class MacroGrid:
    """Uniform macro partition ``T_n = n K`` with ``N K = T_end``."""

    N: int
    K: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InvariantViolation("MacroGrid.N", f"need an integer >= 1, got {self.N!r}")
        if not self.K > 0:
            raise InvariantViolation("MacroGrid.K", f"must be > 0, got {self.K!r}")
        object.__setattr__(self, "N", int(self.N))
        if self.K < 1:
            warnings.warn(f"macro step K={self.K:g} is shorter than one fast period", stacklevel=3)

    @classmethod
    def from_steps(cls, T_end: float, N: int) -> "MacroGrid":
        return cls(N, T_end / N)

    @classmethod
    def from_step_size(cls, T_end: float, K: float) -> "MacroGrid":
        N = round(T_end / K)
        if N < 1 or abs(N * K - T_end) > 1e-9 * T_end:
            raise InvariantViolation("MacroGrid.K", f"T_end/K must be an integer, got {T_end}/{K}")
        return cls(N, T_end / N)

    @property
    def T_end(self) -> float:
        return self.N * self.K

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(self.N + 1) * self.K


@dataclass(eq=False)
class MacroTrajectory:
    """Result of :func:`run_multiscale`.

    ``values`` holds ``U_0..U_n`` for the steps that completed, ``reactions``
    the averaged feedback ``R_0..R_{n-1}`` that produced them.
    """

    times: NDArray[np.float64]
    values: NDArray[np.float64]
    reactions: NDArray[np.float64]
    cycles: NDArray[np.int64]
    M: int
    status: str = "completed"
    failed_step: int | None = None
    wall_time: float = 0.0
    final_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def cn_steps(self) -> int:
        """Total Crank-Nicolson steps spent in the micro solver."""
        return int(self.cycles.sum()) * self.M

    @property
    def n_period(self) -> float:
        """Mean number of cycles per macro step."""
        return float(self.cycles.mean()) if self.cycles.size else 0.0

    @property
    def final(self) -> float:
        return float(self.values[-1])


def euler_bootstrap(U0: float, R0: float, K: float, epsilon: float, u_max: float | None = None) -> float:
    """``U_1 = U_0 + K eps R_0``."""
    U1 = U0 + K * epsilon * R0
    if u_max is not None and U1 > u_max:
        raise DomainExhausted(U1, u_max)
    return U1


def ab2_step(
    U_prev: float,
    R_prev: float,
    R_prev2: float,
    K: float,
    epsilon: float,
    u_max: float | None = None,
) -> float:
    """``U_n = U_{n-1} + 3K/2 eps R_{n-1} - K/2 eps R_{n-2}``."""
    U = U_prev + 1.5 * K * epsilon * R_prev - 0.5 * K * epsilon * R_prev2
    if U < 0:
        raise MultiscaleError(f"Adams-Bashforth produced a negative slow value {U!r}")
    if u_max is not None and U > u_max:
        raise DomainExhausted(U, u_max)
    return U


def mean_forcing_guess(sys: FastSystem, u: float, n: int = 4096) -> NDArray[np.float64]:
    """Steady state of the period-averaged forcing, ``mean(f_i) / lambda_i(u)``."""
    t = np.arange(n) / n
    return sys.forcing(t).mean(axis=0) / sys.decay_rates(u)


def run_multiscale(
    sys: FastSystem,
    scale: ScaleParams,
    macro: MacroGrid,
    micro: MicroGrid,
    psolver: PeriodicSolverConfig,
    v_guess: ArrayLike | None = None,
) -> MacroTrajectory:
    """Run the explicit multiscale scheme over ``[0, N K]``.

    Parameters
    ----------
    sys, scale
        Problem definition; ``scale.u0`` is the initial slow value.
    macro, micro
        Macro partition (``K``, ``N``) and period grid (``k = 1/M``).
    psolver
        Periodic solver settings (``tol_P``, cycle cap, method).
    v_guess
        First guess for the periodic initial value at ``U_0``. Defaults to
        :func:`mean_forcing_guess`. Later steps are warm-started from the
        converged initial value of the previous step.

    Returns
    -------
    MacroTrajectory
        With ``status == "domain_exhausted"`` if ``U`` left ``[0, u_max]``;
        the steps before the failure are kept.

    Raises
    ------
    NonConvergence
        If a periodic solve fails; ``exc.step`` is the macro step index.
    """
    t0 = time.perf_counter()
    u_max = min(scale.u_max, sys.u_max)
    K, eps = macro.K, scale.epsilon

    values = [float(scale.u0)]
    reactions: list[float] = []
    cycles: list[int] = []
    guess = mean_forcing_guess(sys, scale.u0) if v_guess is None else np.asarray(v_guess, dtype=float)
    status, failed = "completed", None
    residual = 0.0

    for n in range(1, macro.N + 1):
        U = values[-1]
        try:
            sol = solve_periodic(sys, U, guess, micro, psolver)
        except NonConvergence as exc:
            exc.step = n
            raise
        guess = sol.initial
        residual = sol.periodicity_residual
        R = averaged_reaction(sys, U, sol)
        reactions.append(R)
        cycles.append(sol.cycles_used)
        try:
            if n == 1:
                U_next = euler_bootstrap(U, R, K, eps, u_max=u_max)
            else:
                U_next = ab2_step(U, R, reactions[-2], K, eps, u_max=u_max)
        except DomainExhausted:
            status, failed = "domain_exhausted", n
            break
        values.append(U_next)

    n_done = len(values) - 1
    return MacroTrajectory(
        times=np.arange(n_done + 1) * K,
        values=np.asarray(values),
        reactions=np.asarray(reactions),
        cycles=np.asarray(cycles, dtype=np.int64),
        M=micro.M,
        status=status,
        failed_step=failed,
        wall_time=time.perf_counter() - t0,
        final_residual=residual,
    )
