import math

import numpy as np
import pytest

from conftest import unforced_system
from periodic_hmm import (
    DomainExhausted,
    InvariantViolation,
    MacroGrid,
    MicroGrid,
    NonConvergence,
    PeriodicSolverConfig,
    ScaleParams,
    ab2_step,
    averaged_reaction,
    euler_bootstrap,
    mean_forcing_guess,
    run_multiscale,
    solve_periodic,
)


def test_macro_grid():
    g = MacroGrid.from_step_size(1000.0, 10.0)
    assert g.N == 100 and g.T_end == pytest.approx(1000.0)
    assert MacroGrid.from_steps(1000.0, 256).K == pytest.approx(3.90625)
    with pytest.raises(InvariantViolation):
        MacroGrid.from_step_size(1000.0, 3.0)
    with pytest.raises(InvariantViolation):
        MacroGrid(0, 1.0)
    with pytest.warns(UserWarning):
        MacroGrid(10, 0.5)


def test_euler_bootstrap_examples():
    assert euler_bootstrap(0.0, 1.0, 10.0, 1e-3) == pytest.approx(0.01, abs=1e-15)
    assert euler_bootstrap(0.3, 0.7, 10.0, 0.0) == 0.3
    assert euler_bootstrap(0.5, 0.4, 100.0, 1e-4) == pytest.approx(0.504, abs=1e-15)


def test_ab2_examples():
    assert ab2_step(0.2, 0.6, 0.6, 10.0, 1e-3) == pytest.approx(0.2 + 10.0 * 1e-3 * 0.6, abs=1e-15)
    assert ab2_step(0.01, 0.99, 1.0, 10.0, 1e-3) == pytest.approx(0.01985, abs=1e-15)
    assert ab2_step(0.4, 0.9, 0.2, 10.0, 0.0) == 0.4


def test_step_domain_checks():
    with pytest.raises(DomainExhausted):
        euler_bootstrap(1.99, 1.0, 100.0, 1e-3, u_max=2.0)
    with pytest.raises(DomainExhausted):
        ab2_step(1.99, 1.0, 1.0, 100.0, 1e-3, u_max=2.0)


def test_single_step_is_euler(scalar):
    sys, scale = scalar
    micro, cfg = MicroGrid(100), PeriodicSolverConfig(1e-8, 500)
    tr = run_multiscale(sys, scale, MacroGrid.from_steps(50.0, 1), micro, cfg)
    sol = solve_periodic(sys, 0.0, mean_forcing_guess(sys, 0.0), micro, cfg)
    R0 = averaged_reaction(sys, 0.0, sol)
    assert tr.values.tolist() == [0.0, euler_bootstrap(0.0, R0, 50.0, scale.epsilon)]
    assert tr.cn_steps == sol.cycles_used * 100


def test_unforced_effective_equation():
    sys = unforced_system()
    scale = ScaleParams(1e-3, 1000.0, 2.0)
    exact = math.sqrt(3) - 1
    errs = []
    for K in (40.0, 20.0, 10.0):
        tr = run_multiscale(sys, scale, MacroGrid.from_step_size(1000.0, K), MicroGrid(20), PeriodicSolverConfig())
        errs.append(abs(tr.final - exact))
    assert errs[0] > errs[1] > errs[2]
    assert 3.2 <= errs[0] / errs[1] <= 4.8
    assert errs[-1] < 1e-5


def test_macro_richardson_ratio(scalar):
    sys, scale = scalar
    vals = [
        run_multiscale(sys, scale, MacroGrid.from_step_size(1000.0, K), MicroGrid(200), PeriodicSolverConfig(1e-10, 500)).final
        for K in (50.0, 25.0, 12.5)
    ]
    assert 3.2 <= (vals[0] - vals[1]) / (vals[1] - vals[2]) <= 4.8


@pytest.mark.parametrize("preset", ["scalar-default", "modal-default"])
def test_trajectory_invariants(preset):
    from periodic_hmm import load_preset

    sys, scale = load_preset(preset)
    tr = run_multiscale(sys, scale, MacroGrid.from_steps(scale.T_end, 50), MicroGrid(50), PeriodicSolverConfig(1e-8, 500))
    assert tr.status == "completed"
    assert tr.values[0] == scale.u0
    assert np.all(np.diff(tr.values) > 0)
    assert np.all((tr.values >= 0) & (tr.values <= scale.u_max))
    assert np.all((tr.reactions > 0) & (tr.reactions <= 1))
    assert tr.cycles.size == 50 and tr.cn_steps == int(tr.cycles.sum()) * 50


def test_second_difference_scales_with_eps_squared(scalar):
    sys, _ = scalar
    d2 = []
    for eps in (1e-3, 1e-4):
        tr = run_multiscale(
            sys, ScaleParams(eps, 1000.0, 2.0), MacroGrid.from_step_size(1000.0, 10.0), MicroGrid(100),
            PeriodicSolverConfig(1e-10, 500),
        )
        d2.append(np.max(np.abs(np.diff(tr.values, 2))))
    assert 50 <= d2[0] / d2[1] <= 200


def test_deterministic(modal):
    sys, scale = modal
    args = (sys, scale, MacroGrid.from_steps(1000.0, 40), MicroGrid(40), PeriodicSolverConfig(1e-6))
    a, b = run_multiscale(*args), run_multiscale(*args)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.reactions.tobytes() == b.reactions.tobytes()
    assert np.array_equal(a.cycles, b.cycles)


def test_domain_exhausted_keeps_partial(scalar):
    sys, _ = scalar
    tr = run_multiscale(
        sys, ScaleParams(1e-3, 5000.0, 2.0), MacroGrid.from_step_size(5000.0, 10.0), MicroGrid(50), PeriodicSolverConfig()
    )
    assert tr.status == "domain_exhausted"
    assert tr.failed_step == tr.values.size
    assert 0 < tr.values.size - 1 < 500
    assert tr.values[-1] <= 2.0
    assert tr.reactions.size == tr.values.size


def test_non_convergence_reports_step(scalar):
    sys, scale = scalar
    with pytest.raises(NonConvergence) as exc:
        run_multiscale(sys, scale, MacroGrid.from_steps(1000.0, 10), MicroGrid(50), PeriodicSolverConfig(1e-14, 2))
    assert exc.value.step == 1


def test_eps_zero_freezes_slow_variable(scalar):
    sys, _ = scalar
    tr = run_multiscale(sys, ScaleParams(0.0, 100.0, 2.0, u0=0.3), MacroGrid.from_steps(100.0, 10), MicroGrid(20), PeriodicSolverConfig())
    assert np.all(tr.values == 0.3)
