"""Run configuration: flat ``key = value`` text with dotted section keys.

Grammar, one entry per line::

    # comment
    section.name = value

Values are floats, integers, booleans (``true``/``false``) or bare strings,
typed by the schema below.  Keys under ``scenario.`` are free-form and kept
as strings.  Floats are written with ``repr`` so a dump parses back to the
identical value.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .book import GridSpec, SimOptions
from .core import (ExecutionProfile, ModelParams, ParameterError, ReferencePath, brownian_path,
                   make_params)
from .impact import SolverConfig

ENV_OUT = "LLOB_OUT"

SCHEMA: dict[str, tuple[type, object]] = {
    "model.sigma": (float, 1.0),
    "model.kappa": (float, 0.0),
    "model.lam": (float, 0.0),
    "model.nu": (str, "0"),
    "model.L": (float, 1.0),
    "solver.n_steps": (int, 1024),
    "solver.picard_tol": (float, 1e-10),
    "solver.picard_max_iter": (int, 500),
    "solver.damping": (float, 1.0),
    "solver.lam_decay_weight": (bool, False),
    "solver.nu_weighting": (str, "frozen"),
    "profile.kind": (str, "constant"),
    "profile.m0": (float, 1.0),
    "profile.m0_over_J": (float, math.nan),
    "profile.T": (float, 1.0),
    "profile.t_switch": (float, 0.5),
    "profile.file": (str, ""),
    "grid.M": (float, 5.0),
    "grid.P": (int, 200),
    "grid.dT": (float, 0.01),
    "book.snapshot_stride": (int, 0),
    "book.advection": (str, "forward"),
    "book.injection": (str, "consume"),
    "book.sources": (bool, True),
    "path.kind": (str, "zero"),
    "path.b": (float, 0.0),
    "path.vol": (float, 1.0),
    "run.seed": (int, 0),
    "run.variant": (str, "llob"),
    "output.dir": (str, ""),
    "output.format": (str, "csv"),
    "scenario.id": (str, ""),
}

PROFILE_KINDS = ("constant", "round-trip", "ramp", "zero", "csv")
PATH_KINDS = ("zero", "constant", "brownian")
OUTPUT_FORMATS = ("csv", "json")

# named execution profiles accepted by ``--profile``
PROFILE_PRESETS: dict[str, dict[str, object]] = {
    "zero": {"profile.kind": "zero"},
    "const-small": {"profile.kind": "constant", "profile.m0_over_J": 0.01},
    "const-unit": {"profile.kind": "constant", "profile.m0_over_J": 1.0},
    "const-large": {"profile.kind": "constant", "profile.m0_over_J": 100.0},
    "round-trip": {"profile.kind": "round-trip", "profile.m0_over_J": 0.01},
    "ramp": {"profile.kind": "ramp", "profile.m0_over_J": 1.0},
}


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(kind: type, text: str, key: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if kind is int:
            as_float = float(text)
            if not as_float.is_integer():
                raise ValueError(text)
            return int(as_float)
        if kind is float:
            return float(text)
    except ValueError:
        raise ParameterError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None
    return text


def parse_text(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParameterError(f"config line {lineno}: empty key")
        raw[key] = value
    return raw


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        resolved = {key: default for key, (_, default) in SCHEMA.items()}
        for key, value in self.values.items():
            if key in SCHEMA:
                kind = SCHEMA[key][0]
                resolved[key] = parse_value(kind, value, key) if isinstance(value, str) else \
                    kind(value)
            elif key.startswith("scenario."):
                resolved[key] = format_value(value) if not isinstance(value, str) else value
            else:
                raise ParameterError(f"unknown config key {key!r}")
        self._validate(resolved)
        object.__setattr__(self, "_explicit", tuple(sorted(self.values)))
        object.__setattr__(self, "values", resolved)

    @staticmethod
    def _validate(v: dict):
        if v["profile.kind"] not in PROFILE_KINDS:
            raise ParameterError(f"profile.kind must be one of {PROFILE_KINDS}")
        if v["path.kind"] not in PATH_KINDS:
            raise ParameterError(f"path.kind must be one of {PATH_KINDS}")
        if v["output.format"] not in OUTPUT_FORMATS:
            raise ParameterError(f"output.format must be one of {OUTPUT_FORMATS}")
        if not v["profile.T"] > 0:
            raise ParameterError("profile.T must be positive")

    # -- text round trip --------------------------------------------------
    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(parse_text(text))

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        """All resolved keys except ``output.dir``, so a run's record does not
        depend on where it was written."""
        return "".join(f"{k} = {format_value(self.values[k])}\n"
                       for k in sorted(self.values) if k != "output.dir")

    def dump(self, path) -> None:
        Path(path).write_text(self.to_text())

    def values_set(self) -> dict:
        """Only the keys given explicitly, as resolved values."""
        return {k: self.values[k] for k in self._explicit}

    def merged(self, overrides: dict) -> "RunConfig":
        values = self.values_set()
        values.update(overrides)
        return RunConfig(values)

    def __getitem__(self, key: str):
        return self.values[key]

    def scenario_value(self, name: str, kind: type = float, default=None):
        key = f"scenario.{name}"
        if key not in self.values:
            if default is None:
                raise ParameterError(f"missing {key}")
            return default
        return parse_value(kind, self.values[key], key)

    def scenario_list(self, name: str) -> list[float]:
        text = self.scenario_value(name, str)
        return [parse_value(float, item, f"scenario.{name}") for item in text.split(",")]

    # -- builders ---------------------------------------------------------
    def model_params(self) -> ModelParams:
        v = self.values
        return make_params(v["model.sigma"], v["model.kappa"], v["model.lam"], v["model.nu"],
                           v["model.L"])

    def solver_config(self) -> SolverConfig:
        v = self.values
        return SolverConfig(v["solver.n_steps"], v["solver.picard_tol"], v["solver.picard_max_iter"],
                            v["solver.damping"], v["solver.lam_decay_weight"],
                            v["solver.nu_weighting"])

    def grid_spec(self) -> GridSpec:
        v = self.values
        return GridSpec(v["grid.M"], v["grid.P"], v["grid.dT"])

    def sim_options(self) -> SimOptions:
        v = self.values
        return SimOptions(v["book.snapshot_stride"], v["book.sources"], v["book.advection"],
                          v["book.injection"])

    def rate(self, params: ModelParams | None = None) -> float:
        v = self.values
        if not math.isnan(v["profile.m0_over_J"]):
            return v["profile.m0_over_J"] * (params or self.model_params()).J
        return v["profile.m0"]

    def profile(self, n_steps: int, params: ModelParams | None = None) -> ExecutionProfile:
        v = self.values
        T = v["profile.T"]
        m0 = self.rate(params)
        kind = v["profile.kind"]
        if kind == "zero":
            return ExecutionProfile.zero(T, n_steps)
        if kind == "constant":
            return ExecutionProfile.constant(m0, T, n_steps)
        if kind == "round-trip":
            return ExecutionProfile.round_trip(m0, v["profile.t_switch"], T, n_steps)
        if kind == "ramp":
            return ExecutionProfile.ramp(m0, T, n_steps)
        return load_profile_csv(v["profile.file"], T, n_steps)

    def reference_path(self, n_steps: int, dt: float) -> ReferencePath:
        v = self.values
        kind = v["path.kind"]
        if kind == "zero":
            return ReferencePath.constant(0.0, n_steps * dt, n_steps)
        if kind == "constant":
            return ReferencePath.constant(v["path.b"], n_steps * dt, n_steps)
        return brownian_path(v["run.seed"], n_steps, dt, v["path.vol"], v["path.b"])

    def output_dir(self) -> Path:
        d = self.values["output.dir"] or os.environ.get(ENV_OUT, "") or "out"
        return Path(d)


def load_profile_csv(path: str, T: float, n_steps: int) -> ExecutionProfile:
    """Read a ``t,m`` table and resample it onto ``n_steps`` by step interpolation."""
    if not path:
        raise ParameterError("profile.file is required for profile.kind = csv")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ParameterError(f"cannot read profile {path}: {exc}") from None
    if data.shape[1] != 2 or data.shape[0] < 1:
        raise ParameterError("profile CSV must have two columns t,m")
    t_in, m_in = data[:, 0], data[:, 1]
    if np.any(np.diff(t_in) <= 0):
        raise ParameterError("profile CSV times must be strictly increasing")
    t = np.linspace(0.0, T, n_steps + 1)
    idx = np.clip(np.searchsorted(t_in, t, side="right") - 1, 0, len(t_in) - 1)
    m = np.where(t < t_in[0], 0.0, m_in[idx])
    return ExecutionProfile(t, m)


def preset_names() -> list[str]:
    root = resources.files("llob") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> RunConfig:
    root = resources.files("llob") / "presets"
    path = root / f"{name}.cfg"
    if not path.is_file():
        raise ParameterError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    return RunConfig.from_text(path.read_text())
