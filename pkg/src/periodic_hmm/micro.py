"""Time-periodic micro problems on one period ``[0, 1]``.

At a frozen slow value ``u`` each mode obeys ``v_i' + lambda_i(u) v_i = f_i``
with ``v(1) = v(0)``. The period is discretised with Crank-Nicolson and the
periodic initial value is found iteratively, either by plain cycling
(``fixed_point``) or by the averaging acceleration (``averaged``), which adds
the correction ``w_i = (v_i(1) - v_i(0)) / lambda_i(u)`` after every cycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import simpson

from . import _kernels
from .errors import DomainError, InvariantViolation, NonConvergence
from .model import FastSystem, reaction, wall_functional

__all__ = [
    "MicroGrid",
    "MicroSolution",
    "PeriodicSolverConfig",
    "cn_cycle",
    "periodic_exact_scalar",
    "solve_periodic",
    "solve_periodic_fixed_point",
    "solve_periodic_averaged",
    "averaged_reaction",
]

Method = Literal["fixed_point", "averaged"]


@dataclass(frozen=True)
class MicroGrid:
    """Uniform grid ``t_m = m/M`` on the period; the step is always ``k = 1/M``."""

    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise InvariantViolation("MicroGrid.M", f"need an integer >= 2, got {self.M!r}")
        object.__setattr__(self, "M", int(self.M))

    @property
    def k(self) -> float:
        return 1.0 / self.M

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(self.M + 1) / self.M

    @classmethod
    def from_step(cls, k: float) -> "MicroGrid":
        M = round(1.0 / k)
        if abs(M * k - 1.0) > 1e-9:
            raise InvariantViolation("MicroGrid.k", f"1/k must be an integer, got k={k!r}")
        return cls(M)


@dataclass(frozen=True, eq=False)
class MicroSolution:
    """One period of the fast trajectory at a frozen slow value."""

    grid: MicroGrid
    samples: NDArray[np.float64]  # (M+1, dim)
    periodicity_residual: float
    cycles_used: int
    u_frozen: float

    @property
    def initial(self) -> NDArray[np.float64]:
        return self.samples[0]

    @property
    def cn_steps(self) -> int:
        return self.cycles_used * self.grid.M


@dataclass(frozen=True)
class PeriodicSolverConfig:
    tol_P: float = 1e-6
    max_cycles: int = 200
    method: Method = "averaged"

    def __post_init__(self):
        if not self.tol_P > 0:
            raise InvariantViolation("PeriodicSolverConfig.tol_P", f"must be > 0, got {self.tol_P!r}")
        if self.max_cycles < 1:
            raise InvariantViolation("PeriodicSolverConfig.max_cycles", "must be >= 1")
        if self.method not in ("fixed_point", "averaged"):
            raise InvariantViolation(
                "PeriodicSolverConfig.method", f"expected 'fixed_point' or 'averaged', got {self.method!r}"
            )


def _check_u(sys: FastSystem, u: float) -> None:
    if not 0 <= u <= sys.u_max:
        raise DomainError(f"u={u!r} outside [0, {sys.u_max!r}]")


def _state(sys: FastSystem, v) -> NDArray[np.float64]:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (sys.dim,):
        raise ValueError(f"state of shape {v.shape} does not match dim={sys.dim}")
    return v


def _residual(samples: NDArray[np.float64]) -> float:
    return float(np.linalg.norm(samples[-1] - samples[0]))


def cn_cycle(sys: FastSystem, u: float, v_init: ArrayLike, grid: MicroGrid) -> MicroSolution:
    """Run a single Crank-Nicolson cycle from ``v_init`` (no periodicity enforced).

    Each step solves
    ``(v_m - v_{m-1})/k + lambda (v_m + v_{m-1})/2 = (f(t_{m-1}) + f(t_m))/2``.
    """
    _check_u(sys, u)
    v0 = _state(sys, v_init)
    samples = _kernels.cn_cycle(sys.decay_rates(u), sys.forcing_samples(grid.M), v0, grid.k)
    return MicroSolution(grid, samples, _residual(samples), 1, float(u))


def periodic_exact_scalar(sys: FastSystem, u: float, n_quad: int = 2**14) -> float:
    """Periodic initial value of the continuous scalar problem.

    Evaluates ``v(0) = e^{-lam} / (1 - e^{-lam}) * int_0^1 f(s) e^{lam s} ds``
    with composite Simpson on ``n_quad`` panels. Meant as an oracle.
    """
    if sys.dim != 1:
        raise ValueError(f"periodic_exact_scalar needs dim == 1, got dim={sys.dim}")
    if n_quad < 16:
        raise ValueError("n_quad must be >= 16")
    _check_u(sys, u)
    lam = float(sys.decay_rates(u)[0])
    s = np.linspace(0.0, 1.0, n_quad + 1)
    integral = simpson(sys.forcing(s)[:, 0] * np.exp(lam * s), x=s)
    # e^{-lam}/(1-e^{-lam}) = 1/expm1(lam)
    return float(integral / np.expm1(lam))


def solve_periodic(
    sys: FastSystem,
    u: float,
    v_guess: ArrayLike,
    grid: MicroGrid,
    cfg: PeriodicSolverConfig,
) -> MicroSolution:
    """Iterate CN cycles until ``||v(1) - v(0)|| < tol_P`` (Euclidean over modes).

    With ``cfg.method == "averaged"`` each restart is ``v(1) + r / lambda(u)``
    with ``r = v(1) - v(0)``; with ``"fixed_point"`` it is ``v(1)``.
    """
    _check_u(sys, u)
    v0 = _state(sys, v_guess).copy()
    lam = sys.decay_rates(u)
    fs = sys.forcing_samples(grid.M)
    averaged = cfg.method == "averaged"

    residual = np.inf
    for cycle in range(1, cfg.max_cycles + 1):
        samples = _kernels.cn_cycle(lam, fs, v0, grid.k)
        jump = samples[-1] - samples[0]
        residual = float(np.linalg.norm(jump))
        if residual < cfg.tol_P:
            return MicroSolution(grid, samples, residual, cycle, float(u))
        v0 = samples[-1] + jump / lam if averaged else samples[-1].copy()
    raise NonConvergence(residual, cfg.max_cycles, cfg.tol_P)


def solve_periodic_fixed_point(sys, u, v_guess, grid, cfg: PeriodicSolverConfig) -> MicroSolution:
    """Plain cycle iteration ``v^(l+1)(0) := v^(l)(1)``; contracts like ``e^{-lambda}``."""
    return solve_periodic(sys, u, v_guess, grid, _with_method(cfg, "fixed_point"))


def solve_periodic_averaged(sys, u, v_guess, grid, cfg: PeriodicSolverConfig) -> MicroSolution:
    """Cycle iteration with the averaging correction ``lambda(u) w = v(1) - v(0)``.

    For a scalar linear mode the error contracts per cycle by
    ``|e^{-lambda} + (e^{-lambda} - 1)/lambda|``.
    """
    return solve_periodic(sys, u, v_guess, grid, _with_method(cfg, "averaged"))


def _with_method(cfg: PeriodicSolverConfig, method: Method) -> PeriodicSolverConfig:
    if cfg.method == method:
        return cfg
    return PeriodicSolverConfig(tol_P=cfg.tol_P, max_cycles=cfg.max_cycles, method=method)


def averaged_reaction(sys: FastSystem, u: float, sol: MicroSolution) -> float:
    """Box-rule average ``(1/M) sum_{m=1}^{M} R(u, sigma(v_m))`` over the period."""
    sigma = wall_functional(sys, sol.samples[1:])
    return float(np.mean(reaction(u, sigma, u_max=sys.u_max)))
