"""Convergence studies: extrapolation, power-law fits, cost accounting, sweeps."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateDesign, FitError, InvariantViolation
from .macro import MacroGrid, run_multiscale
from .micro import MicroGrid, PeriodicSolverConfig
from .model import FastSystem, ScaleParams, load_preset
from .resolved import run_resolved

__all__ = [
    "RichardsonResult",
    "richardson_extrapolate",
    "loglog_slope",
    "FitResult",
    "fit_convergence",
    "epsilon_scaling_of_CK",
    "Speedup",
    "speedup_estimate",
    "TolPRow",
    "tolP_sensitivity",
    "StudyPlan",
    "StudyResult",
    "resolved_reference",
    "run_study",
]


@dataclass(frozen=True)
class RichardsonResult:
    limit: float
    order: float | None  # None when a successive difference vanishes

    @property
    def defined(self) -> bool:
        return self.order is not None


def richardson_extrapolate(values: Sequence[float], ratio: float = 2.0) -> RichardsonResult:
    """Extrapolate ``(v_h, v_{h/r}, v_{h/r^2})`` to ``h -> 0``.

    The observed order is ``log_r |v_h - v_{h/r}| / |v_{h/r} - v_{h/r^2}|`` and
    the limit is the geometric-series completion at that order. When a
    difference is zero, or the order is not positive, the finest value is
    returned as the limit (order ``None`` in the zero-difference case).
    """
    if len(values) != 3:
        raise ValueError("richardson_extrapolate expects exactly three values")
    v1, v2, v3 = (float(v) for v in values)
    d1, d2 = v2 - v1, v3 - v2
    if d1 == 0.0 or d2 == 0.0:
        return RichardsonResult(v3, None)
    order = math.log(abs(d1) / abs(d2)) / math.log(ratio)
    if order <= 0:
        return RichardsonResult(v3, order)
    return RichardsonResult(v3 + d2 / (ratio**order - 1.0), order)


def loglog_slope(x: Iterable[float], y: Iterable[float]) -> float:
    """Least-squares slope of ``log|y|`` against ``log x``."""
    x = np.log(np.asarray(list(x), dtype=float))
    y = np.log(np.abs(np.asarray(list(y), dtype=float)))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# power-law fit  U(k, K) = U* + C_k k^q_k + C_K K^q_K

_PARAM_NAMES = ("U_star", "C_k", "q_k", "C_K", "q_K")


@dataclass(frozen=True)
class FitResult:
    U_star: float
    C_k: float
    q_k: float
    C_K: float
    q_K: float
    residual_norm: float
    confidence: dict[str, float] = field(default_factory=dict)
    n_samples: int = 0

    @property
    def params(self) -> np.ndarray:
        return np.array([self.U_star, self.C_k, self.q_k, self.C_K, self.q_K])

    def predict(self, k, K):
        k, K = np.asarray(k, dtype=float), np.asarray(K, dtype=float)
        return self.U_star + self.C_k * k**self.q_k + self.C_K * K**self.q_K

    def summary(self) -> str:
        def pct(name):
            c = self.confidence.get(name)
            return "" if c is None or not math.isfinite(c) else f" +- {100 * c:.3g}%"

        return (
            f"Fit to U(k,K) = U + C_k k^q_k + C_K K^q_K over {self.n_samples} samples\n"
            f"  U   = {self.U_star:.10g}{pct('U_star')}\n"
            f"  C_k = {self.C_k:.6g}{pct('C_k')}    q_k = {self.q_k:.4f}{pct('q_k')}\n"
            f"  C_K = {self.C_K:.6g}{pct('C_K')}    q_K = {self.q_K:.4f}{pct('q_K')}\n"
            f"  residual norm = {self.residual_norm:.3e}"
        )


def _model(p, k, K):
    return p[0] + p[1] * k ** p[2] + p[3] * K ** p[4]


def _jacobian(p, k, K):
    kq, Kq = k ** p[2], K ** p[4]
    return np.column_stack(
        [np.ones_like(k), kq, p[1] * kq * np.log(k), Kq, p[3] * Kq * np.log(K)]
    )


def _slice_power(x: np.ndarray, y: np.ndarray, default: float = 2.0) -> tuple[float, float]:
    """Exponent and coefficient of ``y = a + C x^q`` from a 1-D slice."""
    x, inv = np.unique(x, return_inverse=True)
    y = np.bincount(inv, weights=y) / np.bincount(inv)
    q = default
    if x.size >= 3:
        d1, d2 = y[1] - y[0], y[2] - y[1]
        if d1 != 0 and d2 != 0 and d1 * d2 > 0:
            q = math.log(abs(d2 / d1)) / math.log(x[2] / x[1])
            if not (0.1 < q < 10):
                q = default
    span = x[-1] ** q - x[0] ** q
    C = (y[-1] - y[0]) / span if span else 0.0
    return q, C


def _richest_slice(key: np.ndarray, other: np.ndarray) -> float:
    """Value of ``key`` that carries the most distinct ``other`` values (ties: smallest)."""
    best, best_n = None, -1
    for value in np.unique(key):
        n = np.unique(other[key == value]).size
        if n > best_n:
            best, best_n = value, n
    return float(best)


def fit_convergence(samples: Sequence[tuple[float, float, float]], max_nfev: int = 2000) -> FitResult:
    """Fit ``U(k, K) = U* + C_k k^q_k + C_K K^q_K`` by Levenberg-Marquardt.

    Parameters
    ----------
    samples
        ``(k, K, U)`` triples; at least six, spanning at least two distinct
        ``k`` and two distinct ``K``.

    Returns
    -------
    FitResult
        ``confidence`` holds relative asymptotic standard errors
        ``sqrt(diag(s^2 (J^T J)^-1)) / |p|`` with ``s^2 = RSS/(n-5)``.

    Raises
    ------
    FitError
        Degenerate design, solver failure, or non-positive fitted exponents.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise FitError("samples must be (k, K, U) triples")
    k, K, U = data.T
    n_k, n_K = np.unique(k).size, np.unique(K).size
    if data.shape[0] < 6 or n_k < 2 or n_K < 2:
        raise DegenerateDesign(
            f"degenerate design: {data.shape[0]} samples, {n_k} distinct k, {n_K} distinct K "
            "(need >= 6 samples, >= 2 distinct k and >= 2 distinct K)"
        )
    if np.any(k <= 0) or np.any(K <= 0):
        raise FitError("step sizes must be positive")

    # initial guess from one-dimensional slices
    K_fix = _richest_slice(K, k)
    sel = K == K_fix
    q_k, C_k = _slice_power(k[sel], U[sel])
    k_fix = _richest_slice(k, K)
    sel = k == k_fix
    q_K, C_K = _slice_power(K[sel], U[sel])
    U0 = float(np.mean(U - C_k * k**q_k - C_K * K**q_K))
    p0 = np.array([U0, C_k, q_k, C_K, q_K])

    res = least_squares(
        lambda p: _model(p, k, K) - U,
        p0,
        jac=lambda p: _jacobian(p, k, K),
        method="lm",
        x_scale="jac",
        ftol=1e-15,
        xtol=1e-15,
        gtol=1e-15,
        max_nfev=max_nfev,
    )
    p = res.x
    rss = float(np.sum(res.fun**2))
    best = FitResult(*map(float, p), residual_norm=math.sqrt(rss), n_samples=data.shape[0])
    if res.status <= 0 or not np.all(np.isfinite(p)):
        raise FitError(f"least squares did not converge: {res.message}", best=best)
    if p[2] <= 0 or p[4] <= 0:
        raise FitError(f"non-positive fitted exponents q_k={p[2]:.3g}, q_K={p[4]:.3g}", best=best)

    dof = data.shape[0] - p.size
    conf = {name: math.nan for name in _PARAM_NAMES}
    if dof > 0:
        J = res.jac
        try:
            cov = np.linalg.inv(J.T @ J) * (rss / dof)
            sd = np.sqrt(np.abs(np.diag(cov)))
            conf = {name: float(s / abs(v)) if v else math.inf for name, s, v in zip(_PARAM_NAMES, sd, p)}
        except np.linalg.LinAlgError:
            pass
    return FitResult(*map(float, p), residual_norm=math.sqrt(rss), confidence=conf, n_samples=data.shape[0])


def epsilon_scaling_of_CK(fit_eps: FitResult | None, fit_eps_scaled: FitResult | None) -> float:
    """``C_K(eps) / C_K(eps/alpha)``; expected to be close to ``alpha^2``."""
    if fit_eps is None or fit_eps_scaled is None:
        raise FitError("both fits are required")
    if fit_eps_scaled.C_K == 0:
        raise FitError("C_K of the second fit vanishes")
    return fit_eps.C_K / fit_eps_scaled.C_K


# ---------------------------------------------------------------------------
# cost accounting


def _as_count(x: float):
    r = round(x)
    return int(r) if abs(x - r) <= 1e-9 * max(1.0, abs(x)) else x


@dataclass(frozen=True)
class Speedup:
    E_fwd: float
    E_ms: float
    ratio: float
    balanced_ratio: float  # k / (eps n_period), valid when K = k/eps


def speedup_estimate(k: float, K: float, epsilon: float, n_period: float, T: float) -> Speedup:
    """Fast-step counts of the resolved and the multiscale runs.

    ``E_fwd = T/k`` and ``E_ms = (T/K) n_period (1/k)``; integral counts are
    returned as ``int``.
    """
    for name, val in (("k", k), ("K", K), ("epsilon", epsilon), ("n_period", n_period), ("T", T)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val!r}")
    E_fwd = _as_count(T / k)
    E_ms = _as_count(T * n_period / (k * K))
    return Speedup(E_fwd, E_ms, E_fwd / E_ms, k / (epsilon * n_period))


# ---------------------------------------------------------------------------
# tol_P sensitivity


@dataclass(frozen=True)
class TolPRow:
    tol_P: float
    U_T: float
    difference: float
    cycles_total: int
    cn_steps: int


def tolP_sensitivity(
    sys: FastSystem,
    scale: ScaleParams,
    macro: MacroGrid,
    micro: MicroGrid,
    tolP_list: Sequence[float],
    method: str = "averaged",
    max_cycles: int = 1000,
) -> list[TolPRow]:
    """``|U(T)|_{tol_P} - U(T)|_{tol_ref}|`` for each tolerance, ``tol_ref = min(tolP_list)``.

    Rows are sorted by descending ``tol_P``.
    """
    if not tolP_list:
        raise ValueError("tolP_list is empty")
    tols = sorted({float(t) for t in tolP_list}, reverse=True)
    runs = {}
    for tol in tols:
        cfg = PeriodicSolverConfig(tol_P=tol, max_cycles=max_cycles, method=method)
        runs[tol] = run_multiscale(sys, scale, macro, micro, cfg)
    ref = runs[tols[-1]].final
    return [
        TolPRow(tol, tr.final, abs(tr.final - ref), int(tr.cycles.sum()), tr.cn_steps)
        for tol, tr in runs.items()
    ]


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class StudyPlan:
    """Parameter sweep over ``epsilon x k x K x tol_P``.

    ``design="grid"`` runs the full product; ``"cross"`` runs the ``K`` row at
    the smallest ``k`` plus the ``k`` column at the smallest ``K``. With
    ``scale_horizon`` the horizon is ``T_end * epsilon_base / epsilon`` so that
    ``epsilon * T`` is the same for every ``epsilon``.
    """

    preset: str
    scale: ScaleParams
    k_values: tuple[float, ...]
    K_values: tuple[float, ...]
    tolP_values: tuple[float, ...] = (1e-10,)
    epsilon_values: tuple[float, ...] = ()
    design: str = "grid"
    method: str = "averaged"
    reference_k: float | None = None
    scale_horizon: bool = True
    workers: int = 1

    def __post_init__(self):
        for name in ("k_values", "K_values", "tolP_values"):
            if not getattr(self, name):
                raise InvariantViolation(f"StudyPlan.{name}", "must be non-empty")
        if self.design not in ("grid", "cross"):
            raise InvariantViolation("StudyPlan.design", f"expected 'grid' or 'cross', got {self.design!r}")
        for k in self.k_values:
            MicroGrid.from_step(k)

    @property
    def epsilons(self) -> tuple[float, ...]:
        return tuple(self.epsilon_values) or (self.scale.epsilon,)

    def scale_for(self, eps: float) -> ScaleParams:
        T = self.scale.T_end * self.scale.epsilon / eps if self.scale_horizon else self.scale.T_end
        return ScaleParams(eps, T, self.scale.u_max, self.scale.u0)

    def points(self) -> list[tuple[float, float, float, float]]:
        """Sorted ``(epsilon, k, K, tol_P)`` keys."""
        ks, Ks = sorted(self.k_values), sorted(self.K_values)
        if self.design == "grid":
            kK = {(k, K) for k in ks for K in Ks}
        else:
            kK = {(ks[0], K) for K in Ks} | {(k, Ks[0]) for k in ks}
        return sorted((e, k, K, t) for e in self.epsilons for (k, K) in kK for t in self.tolP_values)


@dataclass
class StudyResult:
    plan: StudyPlan
    rows: list[dict]
    references: dict[float, RichardsonResult]
    fits: dict[float, FitResult | FitError]


def resolved_reference(sys: FastSystem, scale: ScaleParams, k: float) -> RichardsonResult:
    """Extrapolate resolved ``u(T)`` from steps ``k, k/2, k/4``."""
    vals = [run_resolved(sys, scale, k / 2**j).final for j in range(3)]
    return richardson_extrapolate(vals)


def _run_point(args):
    sys, scale, k, K, tol, method = args
    macro = MacroGrid.from_step_size(scale.T_end, K)
    cfg = PeriodicSolverConfig(tol_P=tol, max_cycles=10_000, method=method)
    tr = run_multiscale(sys, scale, macro, MicroGrid.from_step(k), cfg)
    return tr.final, tr.cn_steps, int(tr.cycles.sum()), tr.status


def run_study(
    plan: StudyPlan,
    sys: FastSystem | None = None,
    reference: bool = True,
    fit: bool = True,
    relative: bool = False,
) -> StudyResult:
    """Run every sweep point, then attach references, errors and fits.

    ``sys`` defaults to the plan's preset system. Errors are absolute unless
    ``relative`` is set. Points run in a process pool when
    ``plan.workers > 1``; rows come back in sorted key order regardless of
    completion order.
    """
    if sys is None:
        sys, _ = load_preset(plan.preset)
    keys = plan.points()
    jobs = [(sys, plan.scale_for(e), k, K, t, plan.method) for (e, k, K, t) in keys]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=min(plan.workers, os.cpu_count() or 1)) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]

    refs: dict[float, RichardsonResult] = {}
    if reference:
        k_ref = plan.reference_k or min(plan.k_values)
        for e in plan.epsilons:
            refs[e] = resolved_reference(sys, plan.scale_for(e), k_ref)

    rows = []
    for (e, k, K, tol), (U_T, cn, cyc, status) in zip(keys, results):
        ref = refs.get(e)
        if ref is None:
            err = math.nan
        else:
            err = abs(U_T - ref.limit) / (abs(ref.limit) if relative else 1.0)
        rows.append(
            {
                "epsilon": e,
                "k": k,
                "K": K,
                "tol_P": tol,
                "U_T": U_T,
                "error": err,
                "E_ms": cn,
                "cycles_total": cyc,
                "status": status,
            }
        )

    fits: dict[float, FitResult | FitError] = {}
    if fit:
        tol_ref = min(plan.tolP_values)
        for e in plan.epsilons:
            samples = [(r["k"], r["K"], r["U_T"]) for r in rows if r["epsilon"] == e and r["tol_P"] == tol_ref]
            try:
                fits[e] = fit_convergence(samples)
            except FitError as exc:
                fits[e] = exc
    return StudyResult(plan, rows, refs, fits)
