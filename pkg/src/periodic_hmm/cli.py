"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 domain exhausted, 5 infeasible resolved run, 1 anything else.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .config import RunConfig, load_toml, resolve
from .errors import (
    ConfigError,
    DegenerateDesign,
    DomainError,
    FitError,
    InfeasibleCost,
    InvariantViolation,
    MultiscaleError,
    NonConvergence,
)
from .macro import mean_forcing_guess, run_multiscale
from .micro import solve_periodic
from .report import emit_report, read_csv_samples
from .resolved import run_resolved
from .study import fit_convergence, run_study, speedup_estimate, tolP_sensitivity

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NONCONV, EXIT_EXHAUSTED, EXIT_INFEASIBLE = 0, 1, 2, 3, 4, 5
OUTPUT_ENV = "PERIODIC_HMM_OUT"

COMMANDS = ("run-resolved", "run-multiscale", "solve-periodic", "converge", "fit", "speedup", "tolp-study")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("problem")
    g.add_argument("--config", help="TOML configuration file")
    g.add_argument("--preset", help="built-in system preset (scalar-default, modal-default)")
    g.add_argument("--epsilon", type=float, help="scale ratio")
    g.add_argument("--T", type=float, help="time horizon")
    g.add_argument("--u0", type=float, help="initial slow value")
    g.add_argument("--u-max", type=float, dest="u_max", help="upper end of the slow domain")
    mk = g.add_mutually_exclusive_group()
    mk.add_argument("--M", type=int, help="fast steps per period (k = 1/M)")
    mk.add_argument("--k", type=float, help="fast step; 1/k must be an integer")
    mK = g.add_mutually_exclusive_group()
    mK.add_argument("--K", type=float, help="macro step")
    mK.add_argument("--N", type=int, help="number of macro steps")
    g.add_argument("--tolp", type=float, nargs="+", help="periodicity tolerance(s)")
    g.add_argument("--method", choices=("fixed-point", "averaged"), help="periodic solver")
    g.add_argument("--max-cycles", type=int, dest="max_cycles", help="cycle cap of the periodic solver")
    g.add_argument("--stride", type=int, help="output stride of resolved runs")
    g.add_argument("--workers", type=int, help="worker processes for sweeps")
    g.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<command> or ./runs/<command>)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="periodic-hmm",
        description="Multiscale and fully resolved solvers for slow-fast systems with periodic fast forcing.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    common = _common()
    helps = {
        "run-resolved": "integrate the coupled system at the fast step over [0, T]",
        "run-multiscale": "run the multiscale scheme with macro step K",
        "solve-periodic": "solve the periodic micro problem at a frozen slow value",
        "converge": "convergence sweep over k, K (and epsilon) with reference and fit",
        "fit": "fit U(k,K) = U + C_k k^q_k + C_K K^q_K to a sweep CSV",
        "speedup": "fast-step counts of the resolved and multiscale runs",
        "tolp-study": "sensitivity of U(T) to the periodicity tolerance",
    }
    subs = {name: sub.add_parser(name, parents=[common], help=helps[name]) for name in COMMANDS}
    subs["solve-periodic"].add_argument("--u", type=float, help="frozen slow value (default u0)")
    subs["fit"].add_argument("--input", required=True, help="CSV with columns k, K, U_T (optionally epsilon)")
    subs["speedup"].add_argument(
        "--n-period", type=float, dest="n_period", help="cycles per macro step; skips the measuring run"
    )
    subs["converge"].add_argument("--relative", action="store_true", help="report relative errors")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    o: dict = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    if args.preset is not None:
        o["preset"] = args.preset
    put("scale", "epsilon", args.epsilon)
    put("scale", "T", args.T)
    put("scale", "u0", args.u0)
    put("scale", "u_max", args.u_max)
    if args.k is not None:
        M = round(1.0 / args.k)
        if M < 1 or abs(M * args.k - 1.0) > 1e-9:
            raise ConfigError(f"1/k must be an integer, got k={args.k!r}", "micro.M")
        put("micro", "M", M)
    put("micro", "M", args.M)
    put("micro", "max_cycles", args.max_cycles)
    if args.method is not None:
        put("micro", "method", args.method.replace("-", "_"))
    put("macro", "K", args.K)
    put("macro", "N", args.N)
    put("resolved", "stride", args.stride)
    put("study", "workers", args.workers)
    if args.tolp is not None:
        if args.command == "converge":
            put("study", "tolP_values", list(args.tolp))
        elif args.command == "tolp-study":
            put("study", "tolP_sweep", list(args.tolp))
        elif len(args.tolp) != 1:
            raise ConfigError("a single tolerance is expected for this command", "micro.tol_P")
        else:
            put("micro", "tol_P", args.tolp[0])
    if getattr(args, "u", None) is not None:
        put("micro", "u", args.u)
    if getattr(args, "relative", False):
        put("study", "relative_error", True)
    return o


def parse_and_validate(argv: list[str] | None = None) -> tuple[RunConfig, argparse.Namespace]:
    """Parse ``argv``, layer preset < file < flags, and build every problem object."""
    args = build_parser().parse_args(argv)
    file_data, text = ({}, None)
    if args.config:
        file_data, text = load_toml(args.config)
    settings = resolve(file_data, _overrides(args))
    out = args.out or settings.get("output", {}).get("dir")
    if out is None:
        out = str(Path(os.environ.get(OUTPUT_ENV, "runs")) / args.command)
    cfg = RunConfig(args.command, settings, args.config, out, text)
    cfg.validate_objects()
    return cfg, args


def _echo(msg: str) -> None:
    print(msg, flush=True)


def _run(cfg: RunConfig, args: argparse.Namespace) -> int:
    cmd = cfg.command
    report = dict(out_dir=cfg.out_dir, config_echo=cfg.echo(), config_hash=cfg.hash)
    t0 = time.perf_counter()
    status = EXIT_OK

    if cmd == "fit":
        groups = read_csv_samples(args.input)
        if not groups:
            raise DegenerateDesign(f"{args.input}: no samples")
        results = {}
        for eps, samples in sorted(groups.items(), key=lambda kv: (kv[0] is None, kv[0] or 0.0)):
            results[eps] = fit_convergence(samples)
        for eps, fit in results.items():
            out = Path(cfg.out_dir) if len(results) == 1 else Path(cfg.out_dir) / f"eps_{eps!r}"
            emit_report(fit, out, report["config_echo"], report["config_hash"], time.perf_counter() - t0)
            _echo(("" if eps is None else f"epsilon = {eps!r}\n") + fit.summary())
        _echo(f"wrote {Path(cfg.out_dir)}")
        return EXIT_OK

    sys_, scale = cfg.system(), cfg.scale()
    grid, psolver = cfg.micro_grid(), cfg.solver_config()

    if cmd == "solve-periodic":
        u = cfg.settings["micro"].get("u", scale.u0)
        sol = solve_periodic(sys_, u, mean_forcing_guess(sys_, u), grid, psolver)
        result = sol
        _echo(f"u = {u!r}: v(0) = {list(map(float, sol.initial))}, cycles_used = {sol.cycles_used}, "
              f"residual = {sol.periodicity_residual:.3e}")
    elif cmd == "run-multiscale":
        tr = run_multiscale(sys_, scale, cfg.macro_grid(), grid, psolver)
        result = tr
        _echo(f"status = {tr.status}; U(T_n) = {tr.final!r} after {tr.values.size - 1} steps; "
              f"CN steps = {tr.cn_steps}")
        if tr.status == "domain_exhausted":
            status = EXIT_EXHAUSTED
    elif cmd == "run-resolved":
        rs = cfg.settings["resolved"]
        tr = run_resolved(sys_, scale, grid.k, stride=rs["stride"], probe_every=rs.get("probe_every"),
                          max_steps=rs["max_steps"])
        result = tr
        _echo(f"status = {tr.status}; u(T) = {tr.final!r}; CN steps = {tr.cn_steps}")
        if tr.status == "domain_exhausted":
            status = EXIT_EXHAUSTED
    elif cmd == "converge":
        plan = cfg.study_plan()
        result = run_study(plan, sys_, relative=cfg.settings["study"].get("relative_error", False))
        for e, fit in result.fits.items():
            _echo(f"epsilon = {e!r}")
            _echo(fit.summary() if not isinstance(fit, Exception) else f"  fit failed: {fit}")
    elif cmd == "tolp-study":
        rows = tolP_sensitivity(sys_, scale, cfg.macro_grid(), grid, cfg.settings["study"]["tolP_sweep"],
                                method=psolver.method, max_cycles=psolver.max_cycles)
        result = rows
        for r in rows:
            _echo(f"tol_P = {r.tol_P:.0e}: U(T) = {r.U_T!r}, difference = {r.difference:.3e}, "
                  f"cycles = {r.cycles_total}")
    elif cmd == "speedup":
        macro = cfg.macro_grid()
        extra = {}
        n_period = args.n_period
        if n_period is None:
            tr = run_multiscale(sys_, scale, macro, grid, psolver)
            if tr.status != "completed":
                _echo(f"multiscale run stopped early ({tr.status}); n_period from completed steps")
            n_period = tr.n_period
            extra["E_ms_counted"] = tr.cn_steps
        result = speedup_estimate(grid.k, macro.K, scale.epsilon, n_period, macro.T_end)
        extra["n_period"] = n_period
        extra["resolved_feasible"] = result.E_fwd <= cfg.settings["resolved"]["max_steps"]
        report["extra_summary"] = extra
        _echo(f"E_fwd = {result.E_fwd}, E_ms = {result.E_ms}, ratio = {result.ratio:.6g}, "
              f"k/(eps n_period) = {result.balanced_ratio:.6g}")
    else:  # pragma: no cover
        raise AssertionError(cmd)

    paths = emit_report(result, wall_time=time.perf_counter() - t0, **report)
    _echo(f"wrote {paths['csv']}")
    return status


def main(argv: list[str] | None = None) -> int:
    try:
        cfg, args = parse_and_validate(argv)
        return _run(cfg, args)
    except (ConfigError, InvariantViolation, DegenerateDesign) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except InfeasibleCost as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED
    except (MultiscaleError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
