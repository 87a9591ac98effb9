"""JSON run configuration with field-path validation.

An empty document ``{}`` reproduces the default experiment.  Sections:

``vehicle``   every ``VehicleParams`` field
``time``      ``theta``
``signal``    every ``SignalPlan`` field
``grid``      ``dv``
``scenario``  ``ScenarioConfig`` fields plus ``epsilon`` (rolling update interval)
``fuel``      ``table_rows`` (4x4, printed layout) and ``orientation``
``output_dir``
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .core import SignalPlan, TimeGrid, VehicleParams
from .fuel import TABLE_ROWS, VtMicroCoefficients
from .offline import GridSpec
from .online import PlannerConfig
from .sim import ScenarioConfig

ORIENTATIONS = ("printed", "transposed")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class FuelConfig:
    """``printed`` reads ``table_rows[j][i]`` as the coefficient of ``v**i * a**j``;
    ``transposed`` reads ``table_rows[i][j]``."""

    table_rows: tuple = TABLE_ROWS
    orientation: str = "printed"

    def coefficients(self) -> VtMicroCoefficients:
        if self.orientation == "printed":
            return VtMicroCoefficients.from_table_rows(self.table_rows)
        return VtMicroCoefficients(tuple(tuple(r) for r in self.table_rows))


@dataclass(frozen=True)
class RunConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    theta: float = 1.0
    signal: SignalPlan = field(default_factory=SignalPlan)
    grid: GridSpec = field(default_factory=GridSpec)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    epsilon: float = 1.0
    fuel: FuelConfig = field(default_factory=FuelConfig)
    output_dir: str = "out"

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.theta, max(int(round(self.scenario.horizon / self.theta)), 1))

    @property
    def coefficients(self) -> VtMicroCoefficients:
        return self.fuel.coefficients()

    def scenario_for(self, mode: str = "static", **overrides) -> ScenarioConfig:
        """Scenario with the planner set for ``mode`` and any field overridden."""
        if mode not in ("static", "rolling"):
            raise ConfigError(f"mode: expected static or rolling, got {mode!r}")
        planner = PlannerConfig(None if mode == "static" else self.epsilon)
        try:
            return dataclasses.replace(self.scenario, planner=planner, **overrides)
        except ValueError as exc:
            raise ConfigError(f"scenario.{exc}") from exc


def _number(path: str, value, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {type(value).__name__}")
    if integer:
        if float(value) != int(value):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _fields(section: str, doc, cls, skip=()) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(f"{section}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    out = {}
    for key, value in doc.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown field")
        default = known[key].default
        path = f"{section}.{key}"
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: expected true or false")
            out[key] = value
        else:
            out[key] = _number(path, value, integer=isinstance(default, int))
    return out


def _build(section: str, cls, kwargs: dict):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{section}.{exc}") from exc


def _fuel(doc) -> FuelConfig:
    if not isinstance(doc, dict):
        raise ConfigError("fuel: expected an object")
    for key in doc:
        if key not in ("table_rows", "orientation"):
            raise ConfigError(f"fuel.{key}: unknown field")
    orientation = doc.get("orientation", "printed")
    if orientation not in ORIENTATIONS:
        raise ConfigError(f"fuel.orientation: expected one of {ORIENTATIONS}, got {orientation!r}")
    rows = doc.get("table_rows", TABLE_ROWS)
    if not isinstance(rows, (list, tuple)) or len(rows) != 4:
        raise ConfigError("fuel.table_rows: expected 4 rows")
    table = []
    for j, row in enumerate(rows):
        if not isinstance(row, (list, tuple)) or len(row) != 4:
            raise ConfigError(f"fuel.table_rows[{j}]: expected 4 values")
        table.append(tuple(_number(f"fuel.table_rows[{j}][{i}]", c) for i, c in enumerate(row)))
    cfg = FuelConfig(tuple(table), orientation)
    try:
        cfg.coefficients()
    except ValueError as exc:
        raise ConfigError(f"fuel.table_rows: {exc}") from exc
    return cfg


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    sections = ("vehicle", "time", "signal", "grid", "scenario", "fuel", "output_dir")
    for key in doc:
        if key not in sections:
            raise ConfigError(f"{key}: unknown section")

    vehicle = _build("vehicle", VehicleParams, _fields("vehicle", doc.get("vehicle", {}), VehicleParams))
    tdoc = doc.get("time", {})
    if not isinstance(tdoc, dict) or set(tdoc) - {"theta"}:
        raise ConfigError("time: only 'theta' is configurable")
    theta = _number("time.theta", tdoc.get("theta", 1.0))
    if not theta > 0:
        raise ConfigError("time.theta: must be positive")

    signal = _build("signal", SignalPlan, _fields("signal", doc.get("signal", {}), SignalPlan))
    try:
        TimeGrid(theta).ticks(signal.cycle, "cycle")
        for name in ("green", "yellow", "red", "offset"):
            TimeGrid(theta).ticks(getattr(signal, name), name)
    except ValueError as exc:
        raise ConfigError(f"signal.{exc}") from exc

    gdoc = doc.get("grid", {})
    if not isinstance(gdoc, dict) or set(gdoc) - {"dv"}:
        raise ConfigError("grid: only 'dv' is configurable")
    grid = _build("grid", GridSpec, {"dv": _number("grid.dv", gdoc.get("dv", 0.5)), "theta": theta})
    try:
        grid.indices(vehicle)
    except ValueError as exc:
        raise ConfigError(f"vehicle.{exc}") from exc

    sdoc = doc.get("scenario", {})
    if not isinstance(sdoc, dict):
        raise ConfigError("scenario: expected an object")
    sdoc = dict(sdoc)
    epsilon = _number("scenario.epsilon", sdoc.pop("epsilon", 1.0))
    try:
        PlannerConfig(epsilon).epsilon_ticks(TimeGrid(theta))
    except ValueError as exc:
        raise ConfigError(f"scenario.{exc}") from exc
    scenario = _build("scenario", ScenarioConfig,
                      _fields("scenario", sdoc, ScenarioConfig, skip=("planner",)))

    out_dir = doc.get("output_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output_dir: expected a non-empty string")
    return RunConfig(vehicle, theta, signal, grid, scenario, epsilon,
                     _fuel(doc.get("fuel", {})), out_dir)


def load_config(path: Optional[str]) -> RunConfig:
    """Read a JSON config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: not valid JSON ({exc})") from exc
    return parse_config(doc)
