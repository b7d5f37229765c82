"""Heterogeneous multiscale solver for slow-fast ODE systems with time-periodic fast forcing."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateDesign,
    DomainError,
    DomainExhausted,
    FitError,
    InfeasibleCost,
    InvariantViolation,
    MultiscaleError,
    NonConvergence,
)
from .model import (
    PRESETS,
    DecayLaw,
    FastSystem,
    FourierForcing,
    ScaleParams,
    lipschitz_probe,
    load_preset,
    modal_default,
    reaction,
    scalar_default,
    wall_functional,
)
from .micro import (
    MicroGrid,
    MicroSolution,
    PeriodicSolverConfig,
    averaged_reaction,
    cn_cycle,
    periodic_exact_scalar,
    solve_periodic,
    solve_periodic_averaged,
    solve_periodic_fixed_point,
)
from .macro import MacroGrid, MacroTrajectory, ab2_step, euler_bootstrap, mean_forcing_guess, run_multiscale
from .resolved import ResolvedTrajectory, closed_form_slow_f0, periodic_tracking_gap, periodic_initial, run_resolved
from .study import (
    FitResult,
    RichardsonResult,
    Speedup,
    StudyPlan,
    StudyResult,
    TolPRow,
    epsilon_scaling_of_CK,
    fit_convergence,
    loglog_slope,
    resolved_reference,
    richardson_extrapolate,
    run_study,
    speedup_estimate,
    tolP_sensitivity,
)
from .report import emit_report, to_table
