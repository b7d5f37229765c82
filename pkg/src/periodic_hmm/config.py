"""TOML run configuration: schema, layering, validation and echo.

Layers are merged in the order preset defaults < config file < command-line
overrides. Every key is checked against :data:`SCHEMA`; the fully resolved
configuration is what gets echoed next to the results, so a run can be
repeated from the echo alone.
"""

from __future__ import annotations

import copy
import hashlib
import re
import sys as _sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli_w

if _sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError, InvariantViolation
from .macro import MacroGrid
from .micro import MicroGrid, PeriodicSolverConfig
from .model import PRESETS, DecayLaw, FastSystem, FourierForcing, ScaleParams, load_preset
from .study import StudyPlan

__all__ = [
    "SCHEMA",
    "DEFAULTS",
    "RunConfig",
    "load_toml",
    "validate",
    "resolve",
    "dumps",
    "config_hash",
]

FLOAT, INT, STR, BOOL = "float", "int", "str", "bool"
FLOATS = "float[]"

_MODE_SCHEMA = {
    "decay": FLOATS,
    "lambda_floor": FLOAT,
    "derivative_bound": FLOAT,
    "forcing_cos": FLOATS,
    "forcing_sin": FLOATS,
}

SCHEMA: dict[str, Any] = {
    "preset": STR,
    "scale": {"epsilon": FLOAT, "T": FLOAT, "u_max": FLOAT, "u0": FLOAT},
    "system": {"name": STR, "sigma0": FLOAT, "weights": FLOATS, "modes": [_MODE_SCHEMA]},
    "micro": {"M": INT, "tol_P": FLOAT, "max_cycles": INT, "method": STR, "u": FLOAT},
    "macro": {"K": FLOAT, "N": INT},
    "resolved": {"stride": INT, "max_steps": FLOAT, "probe_every": INT},
    "study": {
        "k_values": FLOATS,
        "K_values": FLOATS,
        "tolP_values": FLOATS,
        "tolP_sweep": FLOATS,
        "epsilon_values": FLOATS,
        "design": STR,
        "reference_k": FLOAT,
        "scale_horizon": BOOL,
        "relative_error": BOOL,
        "workers": INT,
    },
    "output": {"dir": STR},
}

DEFAULTS: dict[str, Any] = {
    "preset": "scalar-default",
    "micro": {"M": 100, "tol_P": 1e-6, "max_cycles": 200, "method": "averaged"},
    "macro": {"N": 100},
    "resolved": {"stride": 1, "max_steps": 1e9},
    "study": {
        "k_values": [1 / 10, 1 / 20, 1 / 40, 1 / 80],
        "K_values": [125.0, 62.5, 31.25, 15.625, 7.8125, 3.90625],
        "tolP_values": [1e-10],
        "tolP_sweep": [1e-1, 1e-2, 1e-3, 1e-4, 1e-8],
        "design": "grid",
        "scale_horizon": True,
        "relative_error": False,
        "workers": 1,
    },
}

# pairs where setting one key in a higher layer discards the other from lower layers
_EXCLUSIVE = {("macro", "K"): ("macro", "N"), ("macro", "N"): ("macro", "K")}


def _line_of(text: str | None, path: tuple[str, ...]) -> int | None:
    """Best-effort 1-based line number of ``path`` in TOML ``text``."""
    if not text:
        return None
    want = tuple(p for p in path if not p.isdigit())
    table: tuple[str, ...] = ()
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[\[?\s*([^\]]+?)\s*\]\]?", s)
        if m:
            table = tuple(part.strip() for part in m.group(1).split("."))
            if table == want:
                return i
            continue
        m = re.match(r"^([A-Za-z0-9_.\-]+)\s*=", s)
        if m and table + tuple(m.group(1).split(".")) == want:
            return i
    return None


def _check_value(kind: str, value: Any, path: str, text: str | None, parts: tuple[str, ...]):
    def bad(expected):
        raise ConfigError(f"expected {expected}, got {value!r}", path, _line_of(text, parts))

    if kind == FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            bad("a number")
        return float(value)
    if kind == INT:
        if isinstance(value, bool) or not isinstance(value, int):
            bad("an integer")
        return value
    if kind == STR:
        if not isinstance(value, str):
            bad("a string")
        return value
    if kind == BOOL:
        if not isinstance(value, bool):
            bad("a boolean")
        return value
    if kind == FLOATS:
        if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            bad("a list of numbers")
        return [float(v) for v in value]
    raise AssertionError(kind)  # pragma: no cover


def validate(data: dict, text: str | None = None, schema=SCHEMA, prefix: tuple[str, ...] = ()) -> dict:
    """Type-check ``data`` against ``schema``; returns a normalised copy."""
    out = {}
    for key, value in data.items():
        parts = prefix + (key,)
        path = ".".join(parts)
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}", path, _line_of(text, parts))
        kind = schema[key]
        if isinstance(kind, dict):
            if not isinstance(value, dict):
                raise ConfigError("expected a table", path, _line_of(text, parts))
            out[key] = validate(value, text, kind, parts)
        elif isinstance(kind, list):
            if not isinstance(value, list) or any(not isinstance(v, dict) for v in value):
                raise ConfigError("expected an array of tables", path, _line_of(text, parts))
            out[key] = [validate(v, text, kind[0], parts + (str(i),)) for i, v in enumerate(value)]
        else:
            out[key] = _check_value(kind, value, path, text, parts)
    return out


def load_toml(path: str | Path) -> tuple[dict, str]:
    """Parse and type-check a config file; returns ``(data, text)``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", None, int(m.group(1)) if m else None) from None
    return validate(data, text), text


def _merge(base: dict, layer: dict) -> dict:
    out = copy.deepcopy(base)
    for section, value in layer.items():
        if isinstance(value, dict):
            target = out.setdefault(section, {})
            for key, v in value.items():
                other = _EXCLUSIVE.get((section, key))
                if other is not None:
                    target.pop(other[1], None)
                target[key] = copy.deepcopy(v)
        else:
            out[section] = copy.deepcopy(value)
    return out


def _preset_layer(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}", "preset")
    sc = PRESETS[name]["scale"]
    return {"scale": {"epsilon": sc["epsilon"], "T": sc["T_end"], "u_max": sc["u_max"], "u0": sc["u0"]}}


def resolve(file_data: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults, the preset named by the highest layer, the file and the overrides."""
    file_data = file_data or {}
    overrides = validate(overrides or {})
    preset = overrides.get("preset", file_data.get("preset", DEFAULTS["preset"]))
    merged = _merge(DEFAULTS, _preset_layer(preset))
    merged = _merge(merged, file_data)
    merged = _merge(merged, overrides)
    merged["preset"] = preset
    return merged


def dumps(settings: dict) -> str:
    """Serialise a resolved configuration to TOML."""
    return tomli_w.dumps(settings)


def config_hash(settings: dict) -> str:
    return hashlib.sha256(dumps(settings).encode()).hexdigest()


def _wrap(path: str, text: str | None = None):
    """Context manager turning construction errors into :class:`ConfigError`."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, et, exc, tb):
            if exc is None or isinstance(exc, ConfigError):
                return False
            if isinstance(exc, (InvariantViolation, ValueError, KeyError, TypeError)):
                raise ConfigError(str(exc).strip("'\""), path, _line_of(text, tuple(path.split(".")))) from exc
            return False

    return _Ctx()


@dataclass
class RunConfig:
    """A command plus its fully resolved settings."""

    command: str
    settings: dict
    config_path: str | None = None
    out_dir: str | None = None
    source_text: str | None = field(default=None, repr=False)

    # -- problem objects ---------------------------------------------------

    def system(self) -> FastSystem:
        sysdef = self.settings.get("system")
        scale = self.scale()
        if not sysdef:
            with _wrap("preset"):
                sys, _ = load_preset(self.settings["preset"])
            if sys.u_max != scale.u_max:
                with _wrap("scale.u_max"):
                    sys = PRESETS[self.settings["preset"]]["system"](u_max=scale.u_max)
            return sys
        modes = sysdef.get("modes") or []
        if not modes:
            raise ConfigError("at least one [[system.modes]] entry is required", "system.modes")
        laws, cos, sin = [], [], []
        for i, mode in enumerate(modes):
            path = f"system.modes.{i}"
            for key in ("decay", "lambda_floor", "derivative_bound"):
                if key not in mode:
                    raise ConfigError(f"missing key {key!r}", f"{path}.{key}")
            with _wrap(path, self.source_text):
                laws.append(DecayLaw(mode["decay"], mode["lambda_floor"], mode["derivative_bound"], scale.u_max))
            cos.append(tuple(mode.get("forcing_cos", [0.0])))
            sin.append(tuple(mode.get("forcing_sin", [])))
        weights = sysdef.get("weights", [1.0] * len(modes))
        with _wrap("system", self.source_text):
            return FastSystem(
                decay_laws=tuple(laws),
                forcing=FourierForcing(tuple(cos), tuple(sin)),
                wall_weights=tuple(weights),
                sigma0=sysdef.get("sigma0", 1.0),
                name=sysdef.get("name", "custom"),
            )

    def scale(self) -> ScaleParams:
        sc = self.settings["scale"]
        with _wrap("scale", self.source_text):
            return ScaleParams(sc["epsilon"], sc["T"], sc["u_max"], sc.get("u0", 0.0))

    def micro_grid(self) -> MicroGrid:
        with _wrap("micro.M", self.source_text):
            return MicroGrid(self.settings["micro"]["M"])

    def solver_config(self) -> PeriodicSolverConfig:
        mc = self.settings["micro"]
        with _wrap("micro", self.source_text):
            return PeriodicSolverConfig(mc["tol_P"], mc["max_cycles"], mc["method"])

    def macro_grid(self) -> MacroGrid:
        mc = self.settings.get("macro", {})
        T = self.scale().T_end
        with _wrap("macro", self.source_text):
            if "K" in mc:
                return MacroGrid.from_step_size(T, mc["K"])
            return MacroGrid.from_steps(T, mc["N"])

    def study_plan(self) -> StudyPlan:
        st = self.settings["study"]
        with _wrap("study", self.source_text):
            return StudyPlan(
                preset=self.settings["preset"],
                scale=self.scale(),
                k_values=tuple(st["k_values"]),
                K_values=tuple(st["K_values"]),
                tolP_values=tuple(st["tolP_values"]),
                epsilon_values=tuple(st.get("epsilon_values", ())),
                design=st.get("design", "grid"),
                method=self.settings["micro"]["method"],
                reference_k=st.get("reference_k"),
                scale_horizon=st.get("scale_horizon", True),
                workers=st.get("workers", 1),
            )

    def validate_objects(self) -> None:
        """Construct every object the command needs, so invariants fail before any solve."""
        self.scale()
        self.system()
        self.micro_grid()
        self.solver_config()
        if self.command in ("run-multiscale", "speedup", "tolp-study"):
            self.macro_grid()
        if self.command == "converge":
            self.study_plan()

    def echo(self) -> str:
        return dumps(self.settings)

    @property
    def hash(self) -> str:
        return config_hash(self.settings)
