"""Run configuration: TOML text in, validated :class:`RunConfig` out.

Layout::

    command = "verify"          # optional: fields | verify | monopole | sweep
    band = 0
    hbar = 1.0
    output_dir = "out"

    [model]
    name = "rotating-two-level"
    theta = 1.0471975511965976  # any parameter the family accepts

    [grid]                      # optional; the family's default grid otherwise
    origin = [-0.25, -0.25, -0.25]
    spacing = [0.025, 0.025, 0.025]
    shape = [21, 21, 21]
    periodic = [false, false, false]

    [grid.time]                 # give dt or span (span = (nt - 1) * dt)
    t0 = 0.0
    span = 6.283185307179586
    nt = 200

    [tolerances]
    gap_tol = 1e-6              # absolute; default scales with the spectrum
    herm_tol = 1e-12            # absolute; default 1e-12 * max|H|
    residual_multiplier = 10.0
    roundoff_atol = 1e-9
    margin = 2
    overlap_floor = 0.5
    flux_quantization_tol = 0.03
    chern_tol = 1e-6

    [sweep]
    levels = 3
    check = ["hellmann_feynman", "faraday"]
    order_range = [1.8, 2.2]

    [monopole]
    half_width = 10

    [control]
    flip_electric_curvature = false

Every key is checked; unknown keys raise :class:`ValidationError` naming
the key.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli

from .errors import AxisTooShort, BerryFieldError, ParseError, UnknownFamily, ValidationError
from .grid import ParameterGrid, TimeAxis
from .models import get_family

COMMANDS = ("fields", "verify", "monopole", "sweep")


@dataclass
class Tolerances:
    gap_tol: Optional[float] = None
    herm_tol: Optional[float] = None
    residual_multiplier: float = 10.0
    roundoff_atol: float = 1e-9
    margin: int = 2
    overlap_floor: float = 0.5
    flux_quantization_tol: float = 0.03
    chern_tol: float = 1e-6


@dataclass
class SweepConfig:
    levels: int = 3
    check: tuple = ("hellmann_feynman", "faraday")
    order_range: tuple = (1.8, 2.2)


@dataclass
class RunConfig:
    model: str
    model_params: dict
    grid: ParameterGrid
    band: int = 0
    command: Optional[str] = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    output_dir: Path = Path("out")
    hbar: float = 1.0
    sweep: SweepConfig = field(default_factory=SweepConfig)
    monopole_half_width: int = 10
    flip_electric_curvature: bool = False
    source_sha256: str = ""

    def family(self):
        return get_family(self.model, **self.model_params)


_TOP = {"command", "band", "hbar", "output_dir", "model", "grid", "tolerances", "sweep",
        "monopole", "control"}
_GRID = {"origin", "spacing", "shape", "periodic", "time"}
_TIME = {"t0", "dt", "span", "nt"}
_SWEEP = {"levels", "check", "order_range"}


def _unknown(section, allowed, prefix):
    for key in section:
        if key not in allowed:
            raise ValidationError(f"unknown key {prefix}{key!r}", key=key)


def _number(value, key, integer=False, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{key} must be a number, got {value!r}", key=key)
    if integer and not isinstance(value, int):
        raise ValidationError(f"{key} must be an integer, got {value!r}", key=key)
    if not math.isfinite(value):
        raise ValidationError(f"{key} must be finite", key=key)
    if positive and value <= 0:
        raise ValidationError(f"{key} must be positive, got {value!r}", key=key)
    return value


def _triple(value, key, kind):
    if not isinstance(value, list) or len(value) != 3:
        raise ValidationError(f"{key} must be a list of 3 values", key=key)
    if kind is bool:
        if not all(isinstance(v, bool) for v in value):
            raise ValidationError(f"{key} entries must be true/false", key=key)
        return tuple(value)
    return tuple(_number(v, key, integer=kind is int) for v in value)


def _parse_time(sec):
    if not isinstance(sec, dict):
        raise ValidationError("grid.time must be a table", key="time")
    _unknown(sec, _TIME, "grid.time.")
    if "nt" not in sec:
        raise ValidationError("grid.time needs nt", key="nt")
    nt = _number(sec["nt"], "nt", integer=True)
    t0 = float(_number(sec.get("t0", 0.0), "t0"))
    if ("dt" in sec) == ("span" in sec):
        raise ValidationError("grid.time needs exactly one of dt or span", key="dt")
    if "dt" in sec:
        dt = float(_number(sec["dt"], "dt", positive=True))
    else:
        span = float(_number(sec["span"], "span", positive=True))
        if nt < 2:
            raise ValidationError("span needs nt >= 2", key="nt")
        dt = span / (nt - 1)
    try:
        return TimeAxis(t0, dt, nt)
    except AxisTooShort as exc:
        raise ValidationError(f"AxisTooShort: {exc}", key="nt") from exc


def _parse_grid(sec, default):
    if sec is None:
        if default is None:
            raise ValidationError("this model has no default grid; add a [grid] table", key="grid")
        sec = default
    if not isinstance(sec, dict):
        raise ValidationError("grid must be a table", key="grid")
    _unknown(sec, _GRID, "grid.")
    for key in ("origin", "spacing", "shape"):
        if key not in sec:
            raise ValidationError(f"grid needs {key}", key=key)
    origin = _triple(sec["origin"], "origin", float)
    spacing = _triple(sec["spacing"], "spacing", float)
    shape = _triple(sec["shape"], "shape", int)
    periodic = _triple(sec.get("periodic", [False, False, False]), "periodic", bool)
    time = _parse_time(sec["time"]) if sec.get("time") is not None else None
    try:
        return ParameterGrid(origin, spacing, shape, periodic, time)
    except AxisTooShort as exc:
        raise ValidationError(f"AxisTooShort: {exc}", key="shape") from exc
    except ValueError as exc:
        raise ValidationError(str(exc), key="spacing") from exc


def _parse_error(exc, text):
    msg = str(exc)
    m = re.search(r"line (\d+), column (\d+)", msg)
    if m:
        return ParseError(msg, int(m.group(1)), int(m.group(2)))
    return ParseError(msg)


def parse_config(text) -> RunConfig:
    """Parse and validate TOML config text."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise _parse_error(exc, text) from None
    _unknown(raw, _TOP, "")

    model = raw.get("model")
    if not isinstance(model, dict) or "name" not in model:
        raise ValidationError("config needs a [model] table with a name", key="model")
    params = {k: v for k, v in model.items() if k != "name"}
    try:
        family = get_family(model["name"], **params)
    except UnknownFamily as exc:
        raise ValidationError(str(exc.args[0]), key="name") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad model parameters: {exc}", key="model") from exc

    default = family.default_grid
    if default is not None and "time" in default:
        default = dict(default, time=dict(default["time"]))
    grid = _parse_grid(raw.get("grid"), default)

    band = _number(raw.get("band", 0), "band", integer=True)
    if not 0 <= band < family.dim:
        raise ValidationError(f"band {band} outside 0..{family.dim - 1}", key="band")
    command = raw.get("command")
    if command is not None and command not in COMMANDS:
        raise ValidationError(f"command must be one of {COMMANDS}", key="command")
    hbar = float(_number(raw.get("hbar", 1.0), "hbar", positive=True))
    out = raw.get("output_dir", "out")
    if not isinstance(out, str):
        raise ValidationError("output_dir must be a string", key="output_dir")

    tol = Tolerances()
    tsec = raw.get("tolerances", {})
    _unknown(tsec, set(vars(tol)), "tolerances.")
    for key, value in tsec.items():
        integer = key == "margin"
        setattr(tol, key, _number(value, key, integer=integer, positive=key != "margin"))
    if tol.margin < 0:
        raise ValidationError("margin must be >= 0", key="margin")

    sweep = SweepConfig()
    ssec = raw.get("sweep", {})
    _unknown(ssec, _SWEEP, "sweep.")
    if "levels" in ssec:
        sweep.levels = _number(ssec["levels"], "levels", integer=True)
    if "check" in ssec:
        if not isinstance(ssec["check"], list) or not all(isinstance(c, str) for c in ssec["check"]):
            raise ValidationError("sweep.check must be a list of identity names", key="check")
        sweep.check = tuple(ssec["check"])
    if "order_range" in ssec:
        rng = ssec["order_range"]
        if not isinstance(rng, list) or len(rng) != 2:
            raise ValidationError("order_range must be [low, high]", key="order_range")
        sweep.order_range = tuple(float(_number(v, "order_range")) for v in rng)

    msec = raw.get("monopole", {})
    _unknown(msec, {"half_width"}, "monopole.")
    half_width = _number(msec.get("half_width", 10), "half_width", integer=True, positive=True)

    csec = raw.get("control", {})
    _unknown(csec, {"flip_electric_curvature"}, "control.")
    flip = csec.get("flip_electric_curvature", False)
    if not isinstance(flip, bool):
        raise ValidationError("flip_electric_curvature must be true/false",
                              key="flip_electric_curvature")

    return RunConfig(model=model["name"], model_params=params, grid=grid, band=band,
                     command=command, tolerances=tol, output_dir=Path(out), hbar=hbar,
                     sweep=sweep, monopole_half_width=half_width, flip_electric_curvature=flip,
                     source_sha256=hashlib.sha256(text.encode()).hexdigest())


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def validate_sweep(cfg: RunConfig):
    if cfg.sweep.levels < 2:
        raise ValidationError("a sweep needs at least 2 levels", key="levels")
    return cfg


__all__ = ["RunConfig", "Tolerances", "SweepConfig", "parse_config", "load_config",
           "validate_sweep", "BerryFieldError"]
