"""Flat dotted key=value configuration and the experiment plan built from it.

A config file holds one ``key = value`` pair per line; ``#`` starts a
comment. Keys are grouped by prefix:

    setup.*   fields of :class:`~rabi_sim.setups.SetupConfig`
    sweep.*   t-grid, input list, variant list, worker count
    wigner.*  strength, loss, inputs, resource, grid
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .setups import VARIANTS, SetupConfig

COMMANDS = ("sweep", "wigner", "validate", "single")
FORMATS = ("csv", "json")

_SETUP_FIELDS = {f.name: f for f in dataclasses.fields(SetupConfig)}
_SETUP_ALIASES = {"lambda": "lam"}
_INT_FIELDS = {"dim_u", "dim_up", "dim_d", "dim_dp", "dim_a"}
_STR_FIELDS = {"variant", "spd1", "partner", "spd2", "gaussian_correction"}

DEFAULTS = {
    "sweep.t_start": 0.0,
    "sweep.t_stop": 1.5,
    "sweep.t_step": 0.05,
    "sweep.inputs": "coherent:1,thermal:1,prc:1",
    "sweep.variants": "u2-photon,u3-photon",
    "sweep.jobs": 1,
    "wigner.t": 0.7,
    "wigner.gamma": 0.15,
    "wigner.inputs": "prc:1,thermal:1",
    "wigner.resource": "photon",
    "wigner.x_min": -4.0,
    "wigner.x_max": 4.0,
    "wigner.points": 81,
}


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a dict of raw strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def parse_overrides(pairs) -> dict:
    return parse_text("\n".join(pairs or ()), "--set")


def load(path=None, overrides=None) -> dict:
    raw = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        raw.update(parse_text(text, str(p)))
    raw.update(parse_overrides(overrides))
    return raw


def parse_cv_input(spec: str) -> tuple:
    """'vacuum', 'coherent:1', 'thermal:0.5', 'prc:1' or 'fock:2'."""
    kind, _, arg = spec.strip().partition(":")
    kind = kind.strip().lower()
    if kind == "vacuum":
        return ("vacuum",)
    if kind not in ("coherent", "thermal", "prc", "fock"):
        raise ConfigError(f"unknown cv input {spec!r}")
    try:
        val = int(arg) if kind == "fock" else float(arg)
    except ValueError:
        raise ConfigError(f"bad argument in cv input {spec!r}") from None
    return (kind, val)


def input_tag(spec: tuple) -> str:
    return spec[0] if len(spec) == 1 else f"{spec[0]}:{_fmt_plain(spec[1])}"


def _fmt_plain(x) -> str:
    return f"{x:.12g}" if isinstance(x, float) else str(x)


def parse_qubit(spec: str):
    spec = spec.strip()
    if spec.startswith("general"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError("general qubit input is written general:c_plus:c_minus")
        try:
            return ("general", complex(parts[1]), complex(parts[2]))
        except ValueError:
            raise ConfigError(f"bad qubit amplitudes in {spec!r}") from None
    if spec not in ("0", "1", "+", "-"):
        raise ConfigError(f"unknown qubit input {spec!r}")
    return spec


def _to_float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _to_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _to_bool(key, value):
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def setup_overrides(raw: dict) -> dict:
    """Typed SetupConfig keyword arguments from the ``setup.*`` keys."""
    kw = {}
    for key, value in raw.items():
        if not key.startswith("setup."):
            continue
        name = key[len("setup."):]
        name = _SETUP_ALIASES.get(name, name)
        if name not in _SETUP_FIELDS:
            raise ConfigError(f"unknown setup key {key!r}")
        if value.lower() in ("none", "auto", ""):
            kw[name] = None
        elif name == "cv_input":
            kw[name] = parse_cv_input(value)
        elif name == "qubit_input":
            kw[name] = parse_qubit(value)
        elif name == "strict":
            kw[name] = _to_bool(key, value)
        elif name in _INT_FIELDS:
            kw[name] = _to_int(key, value)
        elif name in _STR_FIELDS:
            kw[name] = value
        else:
            kw[name] = _to_float(key, value)
    for name in ("variant", "cv_input", "strict", "dim_u", "dim_d", "dim_dp", "dim_a",
                 "spd1", "spd2", "lam", "alpha", "r", "r_prime", "zeta", "gamma", "t"):
        if kw.get(name, 0) is None:
            raise ConfigError(f"setup.{name} cannot be auto")
    return kw


@dataclass(frozen=True)
class ExperimentPlan:
    command: str
    setup: dict
    t_grid: tuple
    inputs: tuple
    variants: tuple
    out: Path
    format: str = "csv"
    jobs: int = 1
    wigner_t: float = 0.7
    wigner_gamma: float = 0.15
    wigner_inputs: tuple = ()
    wigner_resource: str = "photon"
    grid: tuple = (-4.0, 4.0, 81)
    raw: dict = field(default_factory=dict)

    def setup_config(self, **extra) -> SetupConfig:
        try:
            return SetupConfig(**{**self.setup, **extra})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> list:
        """Resolved configuration as sorted ``key = value`` strings."""
        items = {**{k: str(v) for k, v in DEFAULTS.items()}, **self.raw}
        items["command"] = self.command
        items["format"] = self.format
        return [f"{k} = {items[k]}" for k in sorted(items)]


def t_grid(start: float, stop: float, step: float) -> tuple:
    """Points start, start + step, ... up to stop, rounded to 12 digits."""
    if step <= 0:
        raise ConfigError("sweep.t_step must be positive")
    if stop < start:
        raise ConfigError("sweep.t_stop must not be below sweep.t_start")
    n = int(np.floor((stop - start) / step + 1e-9))
    return tuple(float(f"{start + k * step:.12g}") for k in range(n + 1))


def build_plan(command: str, raw: dict, out, fmt: str = "csv") -> ExperimentPlan:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}")
    known = set(DEFAULTS)
    for key in raw:
        if not key.startswith("setup.") and key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    val = {**{k: str(v) for k, v in DEFAULTS.items()}, **raw}
    setup = setup_overrides(raw)
    SetupConfig(**setup)      # surface field errors early
    variants = tuple(v.strip() for v in val["sweep.variants"].split(",") if v.strip())
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    resource = val["wigner.resource"]
    if resource not in ("photon", "tmsv"):
        raise ConfigError("wigner.resource is photon or tmsv")
    points = _to_int("wigner.points", val["wigner.points"])
    if points < 2:
        raise ConfigError("wigner.points must be at least 2")
    jobs = _to_int("sweep.jobs", val["sweep.jobs"])
    if jobs < 1:
        raise ConfigError("sweep.jobs must be at least 1")
    return ExperimentPlan(
        command=command,
        setup=setup,
        t_grid=t_grid(*(_to_float(k, val[k]) for k in ("sweep.t_start", "sweep.t_stop", "sweep.t_step"))),
        inputs=tuple(parse_cv_input(s) for s in val["sweep.inputs"].split(",") if s.strip()),
        variants=variants,
        out=Path(out),
        format=fmt,
        jobs=jobs,
        wigner_t=_to_float("wigner.t", val["wigner.t"]),
        wigner_gamma=_to_float("wigner.gamma", val["wigner.gamma"]),
        wigner_inputs=tuple(parse_cv_input(s) for s in val["wigner.inputs"].split(",") if s.strip()),
        wigner_resource=resource,
        grid=(_to_float("wigner.x_min", val["wigner.x_min"]),
              _to_float("wigner.x_max", val["wigner.x_max"]), points),
        raw=dict(raw),
    )
