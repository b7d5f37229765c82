"""Result export: CSV tables, flat summaries and run metadata."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
from datetime import datetime, timezone
from functools import singledispatch
from importlib import metadata as _md
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .macro import MacroTrajectory
from .micro import MicroSolution
from .resolved import ResolvedTrajectory
from .study import FitResult, Speedup, StudyResult, TolPRow

__all__ = ["Table", "to_table", "csv_text", "summary_text", "emit_report", "read_csv_samples"]


class Table:
    """Header, rows and a flat summary for one result object."""

    def __init__(self, name: str, header: Sequence[str], rows: list[list], summary: dict[str, Any]):
        self.name = name
        self.header = list(header)
        self.rows = rows
        self.summary = summary
        self.extra_text: dict[str, str] = {}


def _fmt(x) -> str:
    """Round-trip formatting: ``repr`` for floats, empty cell for ``None``."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(table.header)
    for row in table.rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def summary_text(summary: dict[str, Any]) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in summary.items())


@singledispatch
def to_table(result) -> Table:
    raise TypeError(f"no exporter for {type(result).__name__}")


@to_table.register
def _(sol: MicroSolution) -> Table:
    dim = sol.samples.shape[1]
    rows = [[t, *v] for t, v in zip(sol.grid.times, sol.samples)]
    return Table(
        "periodic",
        ["t", *(f"v_{i + 1}" for i in range(dim))],
        rows,
        {
            "u": sol.u_frozen,
            "M": sol.grid.M,
            "cycles_used": sol.cycles_used,
            "periodicity_residual": sol.periodicity_residual,
            "cn_steps": sol.cn_steps,
        },
    )


@to_table.register
def _(tr: MacroTrajectory) -> Table:
    n = tr.values.size
    rows = []
    for i in range(n):
        R = tr.reactions[i] if i < tr.reactions.size else None
        c = tr.cycles[i] if i < tr.cycles.size else None
        rows.append([tr.times[i], tr.values[i], R, c])
    return Table(
        "multiscale",
        ["T_n", "U_n", "R_bar", "cycles_used"],
        rows,
        {
            "status": tr.status,
            "failed_step": tr.failed_step,
            "steps_completed": n - 1,
            "U_final": tr.final,
            "M": tr.M,
            "cycles_total": int(tr.cycles.sum()),
            "n_period": tr.n_period,
            "cn_steps": tr.cn_steps,
            "final_residual": tr.final_residual,
        },
    )


@to_table.register
def _(tr: ResolvedTrajectory) -> Table:
    dim = tr.fast.shape[1]
    rows = [[t, u, *v] for t, u, v in zip(tr.times, tr.slow, tr.fast)]
    return Table(
        "resolved",
        ["t", "u", *(f"v_{i + 1}" for i in range(dim))],
        rows,
        {
            "status": tr.status,
            "failed_step": tr.failed_step,
            "k": tr.step,
            "stride": tr.stride,
            "u_final": tr.final,
            "cn_steps": tr.cn_steps,
            "averaging_error": tr.averaging_error,
            "oscillation": tr.oscillation,
        },
    )


_STUDY_COLUMNS = ["epsilon", "k", "K", "tol_P", "U_T", "error", "E_ms", "cycles_total"]


@to_table.register
def _(res: StudyResult) -> Table:
    rows = [[r[c] for c in _STUDY_COLUMNS] for r in res.rows]
    summary: dict[str, Any] = {"points": len(rows), "cn_steps": int(sum(r["E_ms"] for r in res.rows))}
    summary["incomplete_points"] = sum(r["status"] != "completed" for r in res.rows)
    fit_lines = []
    for e, ref in res.references.items():
        summary[f"reference.{e!r}.limit"] = ref.limit
        summary[f"reference.{e!r}.order"] = ref.order
    for e, fit in res.fits.items():
        if isinstance(fit, FitResult):
            for name in ("U_star", "C_k", "q_k", "C_K", "q_K", "residual_norm"):
                summary[f"fit.{e!r}.{name}"] = getattr(fit, name)
            fit_lines.append(f"epsilon = {e!r}\n{fit.summary()}\n")
        else:
            summary[f"fit.{e!r}.error"] = str(fit)
            fit_lines.append(f"epsilon = {e!r}\n  fit failed: {fit}\n")
    table = Table("study", _STUDY_COLUMNS, rows, summary)
    table.extra_text["fit.txt"] = "\n".join(fit_lines)
    return table


@to_table.register
def _(fit: FitResult) -> Table:
    rows = [[name, getattr(fit, name), fit.confidence.get(name)] for name in ("U_star", "C_k", "q_k", "C_K", "q_K")]
    summary = {name: getattr(fit, name) for name in ("U_star", "C_k", "q_k", "C_K", "q_K", "residual_norm")}
    summary["n_samples"] = fit.n_samples
    table = Table("fit", ["parameter", "value", "rel_confidence"], rows, summary)
    table.extra_text["fit.txt"] = fit.summary() + "\n"
    return table


@to_table.register
def _(s: Speedup) -> Table:
    fields = {"E_fwd": s.E_fwd, "E_ms": s.E_ms, "ratio": s.ratio, "balanced_ratio": s.balanced_ratio}
    return Table("speedup", ["quantity", "value"], [[k, v] for k, v in fields.items()], dict(fields))


@to_table.register(list)
def _(rows: list) -> Table:
    if not rows or not all(isinstance(r, TolPRow) for r in rows):
        raise TypeError("only lists of TolPRow can be exported")
    rows = sorted(rows, key=lambda r: -r.tol_P)
    return Table(
        "tolp",
        ["tol_P", "U_T", "difference", "cycles_total", "cn_steps"],
        [[r.tol_P, r.U_T, r.difference, r.cycles_total, r.cn_steps] for r in rows],
        {
            "tol_ref": rows[-1].tol_P,
            "max_difference": max(r.difference for r in rows),
            "cn_steps": sum(r.cn_steps for r in rows),
        },
    )


def _versions() -> dict[str, str]:
    from . import __version__

    out = {"python": platform.python_version(), "periodic_hmm": __version__}
    for pkg in ("numpy", "scipy", "numba"):
        try:
            out[pkg] = _md.version(pkg)
        except _md.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def emit_report(
    result,
    out_dir: str | Path,
    config_echo: str | None = None,
    config_hash: str | None = None,
    wall_time: float | None = None,
    extra_summary: dict[str, Any] | None = None,
) -> dict[str, Path]:
    """Write ``<name>.csv``, ``summary.txt`` and ``metadata.json`` into ``out_dir``.

    With ``config_echo`` the resolved configuration is written as
    ``config.toml``. The CSV body depends only on the result, so repeated
    identical runs produce identical files; timestamps live in the metadata.
    """
    table = to_table(result)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    summary = dict(table.summary)
    if extra_summary:
        summary.update(extra_summary)
    paths = {"csv": out / f"{table.name}.csv", "summary": out / "summary.txt", "metadata": out / "metadata.json"}
    paths["csv"].write_text(csv_text(table), newline="")
    paths["summary"].write_text(summary_text(summary))
    for fname, text in table.extra_text.items():
        paths[fname] = out / fname
        paths[fname].write_text(text)
    if config_echo is not None:
        paths["config"] = out / "config.toml"
        paths["config"].write_text(config_echo)

    wall = wall_time if wall_time is not None else getattr(result, "wall_time", None)
    meta = {
        "result": table.name,
        "config_hash": config_hash,
        "versions": _versions(),
        "wall_time_s": wall,
        "cn_steps": summary.get("cn_steps"),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    paths["metadata"].write_text(json.dumps(meta, indent=2, default=_json_default) + "\n")
    return paths


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x).__name__)


def read_csv_samples(path: str | Path) -> dict[float | None, list[tuple[float, float, float]]]:
    """Read ``(k, K, U)`` samples from a study CSV, grouped by ``epsilon``.

    Accepts ``U_T`` or ``U`` for the value column; a missing ``epsilon``
    column puts everything under ``None``. With a ``tol_P`` column only the
    rows at the smallest tolerance of each group are kept.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        ucol = "U_T" if "U_T" in cols else "U" if "U" in cols else None
        missing = [c for c in ("k", "K") if c not in cols]
        if ucol is None or missing:
            raise ValueError(f"{path}: need columns k, K and U_T (found {cols})")
        raw: dict[float | None, list[tuple[float, float, float, float]]] = {}
        for row in reader:
            e = float(row["epsilon"]) if "epsilon" in cols and row["epsilon"] != "" else None
            tol = float(row["tol_P"]) if "tol_P" in cols and row["tol_P"] != "" else 0.0
            U = float(row[ucol])
            if math.isnan(U):
                continue
            raw.setdefault(e, []).append((tol, float(row["k"]), float(row["K"]), U))
    groups = {}
    for e, rows in raw.items():
        tol_min = min(r[0] for r in rows)
        groups[e] = [r[1:] for r in rows if r[0] == tol_min]
    return groups
