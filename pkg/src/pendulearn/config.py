"""Scenario configuration files.

A scenario is an INI-style file with one block per concern::

    [scenario]
    name = swingup
    seed = 0

    [ocp]
    T = 1.6
    N = 160
    start = 0, 0
    goal = pi, 0

Numbers may be written as simple arithmetic in ``pi`` (``3*pi/4``).  Every
key is checked against a schema; unknown blocks or keys, missing required
blocks and malformed values are reported with the offending line.  The
effective configuration (defaults filled in) can be echoed back to a file
that parses to an identical configuration.
"""
from __future__ import annotations

import ast
import configparser
import math
import operator
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controller import TrackingGains
from .dynamics import PerturbationSpec, RobotParams, State, pendubot_default, perturb
from .gp import Hyperparams
from .learnloop import ABLATIONS, LearningConfig, Session, SimulationConfig
from .planner import SCHEMES, OCPSpec, TerminalBox


class ConfigError(ValueError):
    """Invalid scenario file; the message names the block, key and line."""


_REQUIRED = object()
_DEFAULT_TRUE = pendubot_default()


@dataclass(frozen=True)
class _Field:
    kind: str               # "float", "int", "bool", "str", "vector"
    default: object = _REQUIRED
    size: int | None = None
    choices: tuple = ()
    positive: bool = False


def _robot_block(defaults: RobotParams | None):
    def d(name):
        return _REQUIRED if defaults is None else tuple(getattr(defaults, name))
    return {
        "mass": _Field("vector", d("mass"), 2, positive=True),
        "length": _Field("vector", d("length"), 2, positive=True),
        "com": _Field("vector", d("com"), 2, positive=True),
        "inertia": _Field("vector", d("inertia"), 2),
        "friction": _Field("vector", d("friction"), 2),
        "gravity": _Field("float", _REQUIRED if defaults is None else defaults.g),
    }


SCHEMA = {
    "scenario": {
        "name": _Field("str"),
        "seed": _Field("int", 0),
    },
    "true": _robot_block(_DEFAULT_TRUE),
    "nominal": _robot_block(None),
    "perturbation": {
        "mass_change": _Field("float", 0.0),
        "com_change": _Field("float", 0.0),
        "friction_scale": _Field("float", 1.0),
        "inertia_rule": _Field("str", "com_squared", choices=("com_squared", "none")),
    },
    "ocp": {
        "T": _Field("float", None),
        "N": _Field("int", None),
        "Ts": _Field("float", None),
        "start": _Field("vector", _REQUIRED, 2),
        "goal": _Field("vector", _REQUIRED, 2),
        "Q": _Field("vector", (1.0, 1.0, 0.1, 0.1), 4, positive=True),
        "Q_N": _Field("vector", (100.0,) * 4, 4, positive=True),
        "R": _Field("vector", (0.01,), 1, positive=True),
        "velocity_bounds": _Field("vector", (8.0, 15.0), 2, positive=True),
        "input_bounds": _Field("vector", (40.0,), 1, positive=True),
        "box_position": _Field("float", 0.2, positive=True),
        "box_velocity": _Field("float", 0.5, positive=True),
        "terminal_margin": _Field("float", 1.0, positive=True),
        "scheme": _Field("str", "taylor", choices=tuple(SCHEMES)),
        "feas_tol": _Field("float", 1e-3, positive=True),
        "max_outer": _Field("int", 25, positive=True),
        "max_inner": _Field("int", 400, positive=True),
    },
    "controller": {
        "K_P": _Field("float", 50.0, positive=True),
        "K_D": _Field("float", 20.0, positive=True),
        "Q_b": _Field("vector", (10.0, 10.0, 1.0, 1.0), 4, positive=True),
        "R_b": _Field("vector", (1.0,), 1, positive=True),
    },
    "learning": {
        "budget": _Field("int", 180, positive=True),
        "amplitude_a": _Field("float", 1.0, positive=True),
        "length_scale_a": _Field("float", 1.5, positive=True),
        "noise_var_a": _Field("float", 1e-3, positive=True),
        "amplitude_p": _Field("float", 1.0, positive=True),
        "length_scale_p": _Field("float", 1.5, positive=True),
        "noise_var_p": _Field("float", 1e-3, positive=True),
        "optimize_noise": _Field("bool", False),
        "max_accel": _Field("float", 500.0, positive=True),
        "causal_window": _Field("int", 9, positive=True),
        "causal_degree": _Field("int", 4, positive=True),
        "offline_window": _Field("int", 21, positive=True),
        "offline_order": _Field("int", 3, positive=True),
    },
    "run": {
        "max_iters": _Field("int", 5, positive=True),
        "ablation": _Field("str", "none", choices=ABLATIONS),
        "baseline": _Field("bool", True),
        "sensor_noise": _Field("float", 0.0),
        "substeps": _Field("int", 10, positive=True),
        "hold_time": _Field("float", 1.0, positive=True),
        "divergence_velocity": _Field("float", 100.0, positive=True),
    },
    "output": {
        "directory": _Field("str", ""),
    },
}
REQUIRED_BLOCKS = ("scenario", "ocp")

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow}


def _eval_number(text: str) -> float:
    """Evaluate a literal such as ``-3*pi/4`` without ``eval``."""
    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = walk(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](walk(node.left), walk(node.right))
        raise ValueError(f"not a number: {text!r}")
    try:
        value = walk(ast.parse(text.strip(), mode="eval"))
    except SyntaxError:
        raise ValueError(f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"not finite: {text!r}")
    return value


def _locate(text: str) -> dict:
    """Map (block, key) and block headers to 1-based line numbers."""
    lines = {}
    block = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            block = m.group(1).strip()
            lines.setdefault((block, None), i)
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and block is not None:
            lines.setdefault((block, m.group(1).strip()), i)
    return lines


def _convert(field: _Field, raw: str):
    raw = raw.strip()
    if field.kind == "str":
        if field.choices and raw not in field.choices:
            raise ValueError(f"expected one of {', '.join(field.choices)}, got {raw!r}")
        if not raw and field.default is _REQUIRED:
            raise ValueError("must not be empty")
        return raw
    if field.kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected true or false, got {raw!r}")
    if field.kind == "int":
        value = _eval_number(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        value = int(value)
        if field.positive and value <= 0:
            raise ValueError("must be positive")
        return value
    if field.kind == "float":
        value = _eval_number(raw)
        if field.positive and value <= 0:
            raise ValueError("must be positive")
        return value
    parts = [p for p in re.split(r"[,\s]+", raw) if p]
    values = tuple(_eval_number(p) for p in parts)
    if field.size is not None and len(values) != field.size:
        raise ValueError(f"expected {field.size} values, got {len(values)}")
    if field.positive and min(values) <= 0:
        raise ValueError("entries must be positive")
    return values


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario; ``values`` holds every block with defaults filled in."""

    values: dict
    source: str = ""

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.values == other.values

    def __getitem__(self, block: str) -> dict:
        return self.values[block]

    @property
    def name(self) -> str:
        return self.values["scenario"]["name"]

    @property
    def seed(self) -> int:
        return self.values["scenario"]["seed"]

    @property
    def max_iters(self) -> int:
        return self.values["run"]["max_iters"]

    @property
    def ablation(self) -> str:
        return self.values["run"]["ablation"]

    @property
    def output_dir(self) -> Path:
        return Path(self.values["output"]["directory"] or f"runs/{self.name}")

    # -- domain objects -------------------------------------------------
    @staticmethod
    def _params(block: dict) -> RobotParams:
        return RobotParams(mass=block["mass"], length=block["length"], com=block["com"],
                           inertia=block["inertia"], friction=block["friction"],
                           g=block["gravity"])

    @property
    def true_params(self) -> RobotParams:
        return self._params(self.values["true"])

    @property
    def perturbation(self) -> PerturbationSpec | None:
        block = self.values.get("perturbation")
        if block is None:
            return None
        return PerturbationSpec.percent(block["mass_change"], block["com_change"],
                                        friction=(block["friction_scale"],) * 2,
                                        inertia_rule=block["inertia_rule"])

    @property
    def nominal_params(self) -> RobotParams:
        if "nominal" in self.values:
            return self._params(self.values["nominal"])
        spec = self.perturbation
        return self.true_params if spec is None else perturb(self.true_params, spec)

    @property
    def ocp(self) -> OCPSpec:
        o = self.values["ocp"]
        return OCPSpec(N=o["N"], Ts=o["Ts"], x_start=State.of(o["start"]),
                       x_goal=State.of(o["goal"]), Q=np.diag(o["Q"]), Q_N=np.diag(o["Q_N"]),
                       R=np.diag(o["R"]), velocity_bounds=np.array(o["velocity_bounds"]),
                       input_bounds=np.array(o["input_bounds"]),
                       box=TerminalBox(o["box_position"], o["box_velocity"]))

    @property
    def planner_options(self) -> dict:
        o = self.values["ocp"]
        return {"scheme": o["scheme"], "feas_tol": o["feas_tol"], "max_outer": o["max_outer"],
                "max_inner": o["max_inner"], "terminal_margin": o["terminal_margin"]}

    @property
    def gains(self) -> TrackingGains:
        c = self.values["controller"]
        return TrackingGains.scalar(c["K_P"], c["K_D"], self.values["ocp"]["Ts"])

    @property
    def learning(self) -> LearningConfig:
        g = self.values["learning"]
        return LearningConfig(
            budget=g["budget"],
            hyper_a=Hyperparams(g["amplitude_a"], g["length_scale_a"], g["noise_var_a"]),
            hyper_p=Hyperparams(g["amplitude_p"], g["length_scale_p"], g["noise_var_p"]),
            optimize_noise=g["optimize_noise"], max_accel=g["max_accel"])

    @property
    def simulation(self) -> SimulationConfig:
        r, g = self.values["run"], self.values["learning"]
        return SimulationConfig(
            substeps=r["substeps"], sensor_noise=r["sensor_noise"],
            divergence_velocity=r["divergence_velocity"], hold_time=r["hold_time"],
            seed=self.seed, causal_window=g["causal_window"], causal_degree=g["causal_degree"],
            offline_window=g["offline_window"], offline_order=g["offline_order"])

    def session(self, ablation: str | None = None) -> Session:
        c = self.values["controller"]
        return Session(true_params=self.true_params, nominal=self.nominal_params, spec=self.ocp,
                       gains=self.gains, lqr_Q=np.diag(c["Q_b"]), lqr_R=np.diag(c["R_b"]),
                       learning=self.learning, sim=self.simulation,
                       ablation=ablation or self.ablation,
                       planner_options=self.planner_options)

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Copy with ``block__key=value`` overrides, re-validated."""
        values = {b: dict(v) for b, v in self.values.items()}
        for dotted, value in changes.items():
            block, key = dotted.split("__")
            values[block][key] = value
        return ScenarioConfig(_validate(values, {}), self.source)

    # -- serialization --------------------------------------------------
    def to_text(self) -> str:
        out = [f"# effective configuration of scenario {self.name!r}"]
        for block, entries in self.values.items():
            out.append(f"\n[{block}]")
            for key, value in entries.items():
                out.append(f"{key} = {_format(value)}")
        return "\n".join(out) + "\n"


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _fail(lines: dict, block: str, key: str | None, message: str):
    where = lines.get((block, key)) or lines.get((block, None))
    loc = f"[{block}]" + (f" {key}" if key else "")
    suffix = f" (line {where})" if where else ""
    raise ConfigError(f"{loc}{suffix}: {message}")


def _validate(raw: dict, lines: dict) -> dict:
    """Check blocks and keys, convert text values, fill defaults, cross-check."""
    missing = [b for b in REQUIRED_BLOCKS if b not in raw]
    if missing:
        raise ConfigError("missing required block(s): " + ", ".join(f"[{b}]" for b in missing)
                          + "; required blocks are " + ", ".join(f"[{b}]" for b in REQUIRED_BLOCKS))
    for block in raw:
        if block not in SCHEMA:
            _fail(lines, block, None, f"unknown block; expected one of {', '.join(SCHEMA)}")
    if "nominal" in raw and "perturbation" in raw:
        _fail(lines, "perturbation", None, "give either [nominal] or [perturbation], not both")

    values = {}
    for block, fields in SCHEMA.items():
        if block not in raw and block in ("nominal", "perturbation"):
            continue
        given = raw.get(block, {})
        for key in given:
            if key not in fields:
                _fail(lines, block, key, f"unknown key; expected one of {', '.join(fields)}")
        entries = {}
        for key, field in fields.items():
            if key in given:
                value = given[key]
                if isinstance(value, str):
                    try:
                        value = _convert(field, value)
                    except ValueError as exc:
                        _fail(lines, block, key, str(exc))
                elif isinstance(value, list):
                    value = tuple(value)
            elif field.default is _REQUIRED:
                _fail(lines, block, key, "required key is missing")
            else:
                value = field.default
            entries[key] = value
        values[block] = entries

    ocp = values["ocp"]
    T, N, Ts = ocp["T"], ocp["N"], ocp["Ts"]
    known = sum(v is not None for v in (T, N, Ts))
    if known < 2:
        _fail(lines, "ocp", None, "give at least two of T, N and Ts")
    if N is None:
        N = int(round(T / Ts))
    if Ts is None:
        Ts = T / N
    if T is None:
        T = N * Ts
    if abs(T - N * Ts) > 1e-12:
        _fail(lines, "ocp", "Ts", f"inconsistent horizon: T={T} but N*Ts={N * Ts}")
    if N < 2:
        _fail(lines, "ocp", "N", "horizon must have at least 2 steps")
    ocp.update(T=float(T), N=int(N), Ts=float(Ts))
    if values["learning"]["offline_window"] % 2 == 0:
        _fail(lines, "learning", "offline_window", "must be odd")
    if values["learning"]["causal_degree"] >= values["learning"]["causal_window"]:
        _fail(lines, "learning", "causal_degree", "must be smaller than causal_window")
    if values["run"]["sensor_noise"] < 0:
        _fail(lines, "run", "sensor_noise", "must be non-negative")
    return values


def parse_text(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    raw = {block: dict(parser[block]) for block in parser.sections()}
    try:
        values = _validate(raw, _locate(text))
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return ScenarioConfig(values, source)


def parse_config(path) -> ScenarioConfig:
    """Read and validate a scenario file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    return parse_text(path.read_text(), str(path))
