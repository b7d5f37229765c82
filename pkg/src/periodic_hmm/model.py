"""Problem data for the slow-fast system.

The coupled system is

    u'(t) = eps * R(u, sigma(v)),
    v_i'(t) + lambda_i(u) v_i(t) = f_i(t),     i = 1..m,

with a 1-periodic forcing ``f`` and the reaction

    R(u, sigma) = 1 / ((1 + u) (1 + sigma^2)),    sigma = sigma0^-1 * sum_i w_i v_i.

For ``m = 1`` and ``w = (1,)``, ``sigma0 = 1`` this is the scalar model problem;
for ``m > 1`` the modes are the eigen-components of a diagonal linear fast
operator and ``sigma`` is a weighted linear readout of them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, InvariantViolation

__all__ = [
    "ScaleParams",
    "DecayLaw",
    "FourierForcing",
    "FastSystem",
    "wall_functional",
    "reaction",
    "lipschitz_probe",
    "scalar_default",
    "modal_default",
    "PRESETS",
    "load_preset",
]

_GRID_POINTS = 10_000


@dataclass(frozen=True)
class ScaleParams:
    """Scale ratio, horizon and admissible range of the slow variable."""

    epsilon: float
    T_end: float
    u_max: float
    u0: float = 0.0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise InvariantViolation("ScaleParams.epsilon", f"must be >= 0, got {self.epsilon!r}")
        if not self.T_end > 0:
            raise InvariantViolation("ScaleParams.T_end", f"must be > 0, got {self.T_end!r}")
        if not 0 <= self.u0 <= self.u_max:
            raise InvariantViolation(
                "ScaleParams.u0", f"need 0 <= u0 <= u_max, got u0={self.u0!r}, u_max={self.u_max!r}"
            )
        if self.epsilon * self.T_end > 10:
            warnings.warn(
                f"epsilon*T_end = {self.epsilon * self.T_end:g} > 10; the horizon is meant to be O(1/epsilon)",
                stacklevel=3,
            )


@dataclass(frozen=True)
class DecayLaw:
    """Polynomial decay rate ``lambda(u) = sum_j coeffs[j] * u**j`` on ``[0, u_max]``.

    The declared floor and derivative bound are verified on a dense grid at
    construction; a law that violates either raises :class:`InvariantViolation`.
    """

    coeffs: tuple[float, ...]
    lambda_floor: float
    derivative_bound: float
    u_max: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.coeffs:
            raise InvariantViolation("DecayLaw.coeffs", "at least one coefficient required")
        if not self.lambda_floor > 0:
            raise InvariantViolation("DecayLaw.lambda_floor", f"must be > 0, got {self.lambda_floor!r}")
        u = np.linspace(0.0, self.u_max, _GRID_POINTS)
        lam = self(u)
        if lam.min() < self.lambda_floor:
            i = int(np.argmin(lam))
            raise InvariantViolation(
                "DecayLaw.lambda_floor",
                f"lambda({u[i]:.6g}) = {lam[i]:.6g} < declared floor {self.lambda_floor:g}",
            )
        if len(u) > 1 and self.u_max > 0:
            slopes = np.abs(np.diff(lam) / np.diff(u))
            if slopes.max() > self.derivative_bound * (1 + 1e-9) + 1e-12:
                raise InvariantViolation(
                    "DecayLaw.derivative_bound",
                    f"sampled |dlambda/du| reaches {slopes.max():.6g} > declared {self.derivative_bound:g}",
                )

    def __call__(self, u):
        # np.polyval wants the leading coefficient first
        return np.polyval(self.coeffs[::-1], u)

    @classmethod
    def affine(cls, a: float, b: float, u_max: float) -> "DecayLaw":
        """``lambda(u) = a + b u`` with the tight floor and bound on ``[0, u_max]``."""
        return cls((a, b), lambda_floor=min(a, a + b * u_max), derivative_bound=abs(b), u_max=u_max)


@dataclass(frozen=True)
class FourierForcing:
    """1-periodic forcing given per mode by a truncated Fourier series.

    ``f_i(t) = cos[i][0] + sum_n cos[i][n] cos(2 pi n t) + sum_n sin[i][n-1] sin(2 pi n t)``.
    """

    cos: tuple[tuple[float, ...], ...]
    sin: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(tuple(float(x) for x in row) for row in self.cos))
        object.__setattr__(self, "sin", tuple(tuple(float(x) for x in row) for row in self.sin))
        if len(self.cos) != len(self.sin):
            raise InvariantViolation("FourierForcing", "cos and sin need one row per mode")

    @property
    def dim(self) -> int:
        return len(self.cos)

    def __call__(self, t: ArrayLike) -> NDArray[np.float64]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((t.size, self.dim))
        for i, (a, b) in enumerate(zip(self.cos, self.sin)):
            if a:
                out[:, i] += a[0]
            for n, an in enumerate(a[1:], start=1):
                out[:, i] += an * np.cos(2 * np.pi * n * t)
            for n, bn in enumerate(b, start=1):
                out[:, i] += bn * np.sin(2 * np.pi * n * t)
        return out


@dataclass(frozen=True, eq=False)
class FastSystem:
    """Fast dynamics ``v_i' + lambda_i(u) v_i = f_i(t)`` and its wall functional.

    ``forcing`` maps an array of times of shape ``(n,)`` to values of shape
    ``(n, dim)`` and must be 1-periodic.
    """

    decay_laws: tuple[DecayLaw, ...]
    forcing: Callable[[NDArray[np.float64]], NDArray[np.float64]]
    wall_weights: tuple[float, ...]
    sigma0: float = 1.0
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "decay_laws", tuple(self.decay_laws))
        object.__setattr__(self, "wall_weights", tuple(float(w) for w in self.wall_weights))
        if self.dim < 1:
            raise InvariantViolation("FastSystem.dim", "need at least one mode")
        if len(self.wall_weights) != self.dim:
            raise InvariantViolation(
                "FastSystem.wall_weights", f"{len(self.wall_weights)} weights for {self.dim} modes"
            )
        if not self.sigma0 > 0:
            raise InvariantViolation("FastSystem.sigma0", f"must be > 0, got {self.sigma0!r}")
        t = np.linspace(0.0, 1.0, 1001)
        f0 = np.asarray(self.forcing(t), dtype=float)
        if f0.shape != (t.size, self.dim):
            raise InvariantViolation(
                "FastSystem.forcing", f"expected shape {(t.size, self.dim)}, got {f0.shape}"
            )
        gap = np.max(np.abs(np.asarray(self.forcing(t + 1.0)) - f0))
        if gap > 1e-12 * max(1.0, np.max(np.abs(f0))):
            raise InvariantViolation("FastSystem.forcing", f"not 1-periodic: max|f(t+1)-f(t)| = {gap:.3e}")

    @property
    def dim(self) -> int:
        return len(self.decay_laws)

    @property
    def u_max(self) -> float:
        return min(law.u_max for law in self.decay_laws)

    @property
    def weights(self) -> NDArray[np.float64]:
        """Effective functional weights ``w_i / sigma0``."""
        return np.asarray(self.wall_weights) / self.sigma0

    def decay_rates(self, u: float) -> NDArray[np.float64]:
        return np.array([law(u) for law in self.decay_laws], dtype=float)

    def decay_coeff_matrix(self) -> NDArray[np.float64]:
        """Polynomial coefficients padded to a ``(dim, degree+1)`` array."""
        n = max(len(law.coeffs) for law in self.decay_laws)
        out = np.zeros((self.dim, n))
        for i, law in enumerate(self.decay_laws):
            out[i, : len(law.coeffs)] = law.coeffs
        return out

    def forcing_samples(self, M: int) -> NDArray[np.float64]:
        """Forcing at ``t_m = m/M``, ``m = 0..M``; row ``M`` equals row ``0``."""
        t = np.arange(M + 1) / M
        return np.ascontiguousarray(self.forcing(t), dtype=float)

    def forcing_sup(self, n: int = 20_001) -> float:
        """``max_t |f(t)|`` over all modes, by dense sampling."""
        return float(np.max(np.abs(self.forcing(np.linspace(0.0, 1.0, n)))))


def wall_functional(sys: FastSystem, v: ArrayLike):
    """Linear wall functional ``sigma = sigma0^-1 sum_i w_i v_i``.

    ``v`` may be a single state of shape ``(dim,)`` or a stack ``(n, dim)``.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (sys.dim,):
        raise ValueError(f"state has trailing dimension {v.shape[-1:]} but system has dim={sys.dim}")
    out = v @ sys.weights
    return float(out) if out.ndim == 0 else out


def reaction(u, sigma, u_max: float = math.inf):
    """Growth term ``R(u, sigma) = 1 / ((1+u) (1+sigma^2))``, in ``(0, 1]`` for ``u >= 0``."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0) or np.any(u_arr > u_max):
        raise DomainError(f"u={u!r} outside [0, {u_max!r}]")
    sigma = np.asarray(sigma, dtype=float)
    out = 1.0 / ((1.0 + u_arr) * (1.0 + sigma * sigma))
    return float(out) if out.ndim == 0 else out


def lipschitz_probe(
    u_range: Sequence[float], sigma_range: Sequence[float], n_samples: int
) -> tuple[float, float]:
    """Largest sampled difference quotients of ``R`` in ``u`` and in ``sigma``.

    A range collapsed to a single point contributes a zero quotient for that
    argument.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    u = np.linspace(u_range[0], u_range[1], n_samples)
    s = np.linspace(sigma_range[0], sigma_range[1], n_samples)
    du, ds = np.diff(u), np.diff(s)
    bound_u = bound_sigma = 0.0
    # row blocks keep memory at O(n) per block instead of O(n^2)
    block = max(2, 2**22 // n_samples)
    for start in range(0, n_samples, block - 1):
        stop = min(start + block, n_samples)
        R = reaction(u[start:stop, None], s[None, :])
        if u[-1] > u[0] and stop - start > 1:
            bound_u = max(bound_u, float(np.max(np.abs(np.diff(R, axis=0)) / du[start : stop - 1, None])))
        if s[-1] > s[0]:
            bound_sigma = max(bound_sigma, float(np.max(np.abs(np.diff(R, axis=1)) / ds[None, :])))
        if stop == n_samples:
            break
    return bound_u, bound_sigma


# ---------------------------------------------------------------------------
# presets

# max_t |sum_i v_i(t)/i| (= 0.698) of the periodic solution at u = 0 with sigma0 = 1,
# computed with the averaged periodic solver (M = 1000, tol_P = 1e-12), rounded.
MODAL_SIGMA0 = 0.7


def scalar_default(u_max: float = 2.0) -> FastSystem:
    """``lambda(u) = 1 + u``, ``f(t) = sin(2 pi t)``, ``sigma = v``."""
    return FastSystem(
        decay_laws=(DecayLaw.affine(1.0, 1.0, u_max),),
        forcing=FourierForcing(cos=((0.0,),), sin=((1.0,),)),
        wall_weights=(1.0,),
        sigma0=1.0,
        name="scalar-default",
    )


def modal_default(u_max: float = 1.0, sigma0: float = MODAL_SIGMA0) -> FastSystem:
    """Four modes, ``lambda_i = i (1+u)``, ``f_i = sin^2(pi t)/i``, ``w_i = 1/i``."""
    dim = 4
    # sin^2(pi t) = 1/2 - cos(2 pi t)/2
    return FastSystem(
        decay_laws=tuple(DecayLaw.affine(float(i), float(i), u_max) for i in range(1, dim + 1)),
        forcing=FourierForcing(
            cos=tuple((0.5 / i, -0.5 / i) for i in range(1, dim + 1)),
            sin=tuple(() for _ in range(dim)),
        ),
        wall_weights=tuple(1.0 / i for i in range(1, dim + 1)),
        sigma0=sigma0,
        name="modal-default",
    )


PRESETS: dict[str, dict] = {
    "scalar-default": {
        "system": scalar_default,
        "scale": {"epsilon": 1e-3, "T_end": 1000.0, "u_max": 2.0, "u0": 0.0},
    },
    "modal-default": {
        "system": modal_default,
        "scale": {"epsilon": 1e-3, "T_end": 1000.0, "u_max": 1.0, "u0": 0.0},
    },
}


def load_preset(name: str) -> tuple[FastSystem, ScaleParams]:
    try:
        entry = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
    scale = ScaleParams(**entry["scale"])
    return entry["system"](u_max=scale.u_max), scale
