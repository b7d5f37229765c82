"""Exception hierarchy shared by the solvers, the study harness and the CLI."""

from __future__ import annotations


class MultiscaleError(Exception):
    """Base class for all errors raised by :mod:`periodic_hmm`."""


class InvariantViolation(MultiscaleError, ValueError):
    """A problem object failed one of its construction-time checks.

    ``invariant`` names the violated property (e.g. ``"DecayLaw.lambda_floor"``).
    """

    def __init__(self, invariant: str, message: str):
        self.invariant = invariant
        super().__init__(f"{invariant}: {message}")


class DomainError(MultiscaleError, ValueError):
    """Slow variable outside the admissible range ``[0, u_max]``."""


class DomainExhausted(MultiscaleError):
    """The slow variable left ``[0, u_max]`` during time stepping."""

    def __init__(self, value: float, u_max: float, step: int | None = None):
        self.value = value
        self.u_max = u_max
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(f"slow variable {value!r} exceeds u_max={u_max!r}{where}")


class NonConvergence(MultiscaleError):
    """Periodic solver hit its cycle cap before meeting ``tol_P``."""

    def __init__(self, residual: float, cycles: int, tol_P: float, step: int | None = None):
        self.residual = residual
        self.cycles = cycles
        self.tol_P = tol_P
        self.step = step
        where = "" if step is None else f" (macro step {step})"
        super().__init__(
            f"periodicity residual {residual:.3e} >= tol_P={tol_P:.1e} "
            f"after {cycles} cycles{where}"
        )


class InfeasibleCost(MultiscaleError):
    """A fully resolved run would need more fast steps than allowed."""

    def __init__(self, projected_steps: float, max_steps: float):
        self.projected_steps = projected_steps
        self.max_steps = max_steps
        super().__init__(
            f"resolved run refused: projected E_fwd = T/k = {projected_steps:.4g} "
            f"fast steps exceeds the limit of {max_steps:.4g}"
        )


class FitError(MultiscaleError):
    """Convergence fit failed; ``best`` holds the best iterate if one exists."""

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)


class DegenerateDesign(FitError):
    """The sample design cannot identify all fit parameters."""


class ConfigError(MultiscaleError):
    """Invalid configuration, with the offending key path and source line."""

    def __init__(self, message: str, key_path: str | None = None, line: int | None = None):
        self.key_path = key_path
        self.line = line
        loc = ""
        if key_path:
            loc += f"[{key_path}]"
        if line is not None:
            loc += f" (line {line})"
        super().__init__(f"{loc} {message}".strip())
