"""Experiment configuration.

A TOML file describes the experiment grid.  Every key is optional; missing
keys fall back to the fog-chamber defaults (scenario 1, both fog types, the
four visibility ranges, both cameras, the three calibrated targets)::

    seed = 2017
    out = "runs/chamber"
    step_m = 0.1
    bin_width_m = 1.0
    frames = 10
    render_scale = 0.25
    contrast_window_m = [5.0, 10.0]
    targets = [0.05, 0.5, 0.9]

    [[scenarios]]
    name = "scenario1"
    kind = "passive"

    [fog]
    types = ["radiation", "advection"]
    visibility_ranges_m = [[10, 20], [20, 30], [30, 40], [50, 60]]

    [[sensors]]
    name = "standard"
    kind = "standard"

    [[sensors]]
    name = "gated"
    kind = "gated"
    [sensors.gating]
    t_laser_ns = 160
    t_delay_ns = 90
    t_gate_ns = 160
    micro_exposures = 2000

    [simulation]
    headlight_gain = 0.45

Command-line flags override file values, file values override defaults.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .atmosphere import FogType
from .errors import DomainError, ValidationError
from .gated import CHAMBER_SCHEME, GatingScheme
from .scene import (
    STANDARD_REFLECTIVITIES,
    LayoutItem,
    NoiseModel,
    OncomingSource,
    ReflectanceTarget,
    Scenario,
    SensorKind,
    SensorModel,
    SimulationParams,
    default_layout,
)

CHAMBER_VISIBILITY_RANGES = ((10.0, 20.0), (20.0, 30.0), (30.0, 40.0), (50.0, 60.0))
U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class NamedScenario:
    name: str
    scenario: Scenario


@dataclass(frozen=True)
class FogSetting:
    """One fog type at one visibility range, represented by the range midpoint."""

    fog_type: FogType
    visibility_range_m: tuple[float, float]

    @property
    def visibility_m(self) -> float:
        lo, hi = self.visibility_range_m
        return (lo + hi) / 2

    @property
    def label(self) -> str:
        lo, hi = self.visibility_range_m
        return f"{self.fog_type.value}_V{lo:g}-{hi:g}"


@dataclass
class ExperimentConfig:
    scenarios: list[NamedScenario] = field(default_factory=lambda: [NamedScenario("scenario1", Scenario.passive())])
    fog: list[FogSetting] = field(
        default_factory=lambda: [FogSetting(t, r) for t in FogType for r in CHAMBER_VISIBILITY_RANGES]
    )
    sensors: list[SensorModel] = field(
        default_factory=lambda: [SensorModel.standard(name="standard"), SensorModel.gated(name="gated")]
    )
    targets: list[ReflectanceTarget] = field(default_factory=lambda: [ReflectanceTarget(r) for r in STANDARD_REFLECTIVITIES])
    layout: tuple[LayoutItem, ...] = field(default_factory=default_layout)
    simulation: SimulationParams = field(default_factory=SimulationParams)
    step_m: float = 0.1
    bin_width_m: float = 1.0
    frames: int = 10
    render_scale: float = 0.25
    contrast_window_m: tuple[float, float] = (5.0, 10.0)
    seed: int = 2017
    out: str | None = None

    def validate(self) -> ExperimentConfig:
        if not self.scenarios:
            raise ValidationError("at least one scenario is required", "scenarios")
        if not self.fog:
            raise ValidationError("at least one fog condition is required", "fog")
        if not self.sensors:
            raise ValidationError("at least one sensor is required", "sensors")
        if not self.targets:
            raise ValidationError("at least one target is required", "targets")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ValidationError("scenario names must be unique", "scenarios")
        names = [s.name for s in self.sensors]
        if len(set(names)) != len(names):
            raise ValidationError("sensor names must be unique", "sensors")
        if not (isinstance(self.seed, int) and 0 <= self.seed <= U64_MAX):
            raise ValidationError("seed must be an unsigned 64-bit integer", "seed")
        for key in ("step_m", "bin_width_m", "render_scale"):
            if not getattr(self, key) > 0:
                raise ValidationError("must be positive", key)
        if self.render_scale > 1:
            raise ValidationError("must not exceed 1", "render_scale")
        if not (isinstance(self.frames, int) and self.frames >= 0):
            raise ValidationError("must be a non-negative integer", "frames")
        rhos = [t.rho for t in self.targets]
        if len(set(rhos)) != len(rhos):
            raise ValidationError("target reflectivities must be unique", "targets")
        lo, hi = self.contrast_window_m
        if not lo < hi:
            raise ValidationError("window start must be below its end", "contrast_window_m")
        return self

    def to_dict(self) -> dict[str, Any]:
        """Plain-data view recorded in the run manifest."""
        return {
            "seed": self.seed,
            "step_m": self.step_m,
            "bin_width_m": self.bin_width_m,
            "frames": self.frames,
            "render_scale": self.render_scale,
            "contrast_window_m": list(self.contrast_window_m),
            "targets": [t.rho for t in self.targets],
            "scenarios": [{"name": s.name, **_plain(s.scenario)} for s in self.scenarios],
            "fog": [{"type": f.fog_type.value, "visibility_range_m": list(f.visibility_range_m)} for f in self.fog],
            "sensors": [_plain(s) for s in self.sensors],
            "layout": [_plain(i) for i in self.layout],
            "simulation": _plain(self.simulation),
        }


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "value") and not isinstance(obj, (int, float)):
        return obj.value
    return obj


# --------------------------------------------------------------------------
# parsing


def _take(table: dict, key: str, path: str, kind, default=None):
    if key not in table:
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ValidationError(f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}", _join(path, key))
    return value


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def _check_keys(table: dict, allowed: set[str], path: str) -> None:
    for key in table:
        if key not in allowed:
            raise ValidationError("unknown key", _join(path, key))


def _build(cls, table: dict, path: str, **fixed):
    """Construct a frozen dataclass from a table, mapping errors onto ``path``."""
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    _check_keys(table, names - set(fixed), path)
    kwargs = dict(fixed)
    for f in dataclasses.fields(cls):
        if f.name in table:
            value = table[f.name]
            if not isinstance(value, (int, float, str, list, bool)):
                raise ValidationError(f"unsupported value {value!r}", _join(path, f.name))
            kwargs[f.name] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except (DomainError, ValueError, TypeError) as exc:
        raise ValidationError(str(exc), path) from None


def _parse_scenario(table: dict, path: str) -> NamedScenario:
    table = dict(table)
    name = _take(table, "name", path, str)
    source = table.pop("oncoming_source", None)
    src = None
    if source is not None:
        if not isinstance(source, dict):
            raise ValidationError("expected a table", _join(path, "oncoming_source"))
        src = _build(OncomingSource, source, _join(path, "oncoming_source"))
    table.pop("name", None)
    kind = table.get("kind", "passive")
    if kind == "oncoming_car" and src is None:
        src = OncomingSource()
    scenario = _build(Scenario, table, path, oncoming_source=src)
    return NamedScenario(name or kind, scenario)


def _parse_sensor(table: dict, path: str) -> SensorModel:
    table = dict(table)
    name = _take(table, "name", path, str)
    kind = _take(table, "kind", path, str, "standard")
    try:
        kind = SensorKind(kind)
    except ValueError:
        raise ValidationError(f"unknown sensor kind {kind!r}", _join(path, "kind")) from None
    noise = table.pop("noise", None)
    gating = table.pop("gating", None)
    fixed: dict[str, Any] = {"kind": kind}
    if noise is not None:
        fixed["noise"] = _build(NoiseModel, noise, _join(path, "noise"))
    if kind is SensorKind.GATED:
        fixed["gating"] = CHAMBER_SCHEME if gating is None else _build(GatingScheme, gating, _join(path, "gating"))
    elif gating is not None:
        raise ValidationError("only gated sensors take a gating table", _join(path, "gating"))
    table.pop("kind", None)
    table.pop("name", None)
    if "horizontal_fov_deg" in table:
        fixed["horizontal_fov_rad"] = math.radians(_take(table, "horizontal_fov_deg", path, float))
        table.pop("horizontal_fov_deg")
    defaults = {"resolution": (1980, 1088), "bit_depth": 12} if kind is SensorKind.STANDARD else {"resolution": (1280, 960), "bit_depth": 10}
    for key, value in defaults.items():
        if key not in table:
            fixed[key] = value
    fixed["name"] = name or kind.value
    return _build(SensorModel, table, path, **fixed)


def _parse_fog(table: dict, path: str) -> list[FogSetting]:
    _check_keys(table, {"types", "visibility_ranges_m", "visibilities_m"}, path)
    types = _take(table, "types", path, list, [t.value for t in FogType])
    fog_types = []
    for i, t in enumerate(types):
        try:
            fog_types.append(FogType(t))
        except ValueError:
            raise ValidationError(f"unknown fog type {t!r}", _join(_join(path, "types"), i)) from None
    ranges: list[tuple[float, float]] = []
    if "visibilities_m" in table:
        for i, v in enumerate(_take(table, "visibilities_m", path, list)):
            if not isinstance(v, (int, float)) or not v > 0:
                raise ValidationError("visibility must be a positive number", _join(_join(path, "visibilities_m"), i))
            ranges.append((float(v), float(v)))
    if "visibility_ranges_m" in table or not ranges:
        for i, r in enumerate(_take(table, "visibility_ranges_m", path, list, [list(r) for r in CHAMBER_VISIBILITY_RANGES])):
            where = _join(_join(path, "visibility_ranges_m"), i)
            if not (isinstance(r, list) and len(r) == 2 and all(isinstance(v, (int, float)) for v in r)):
                raise ValidationError("expected [low, high]", where)
            lo, hi = float(r[0]), float(r[1])
            if not 0 < lo <= hi:
                raise ValidationError("need 0 < low <= high", where)
            ranges.append((lo, hi))
    return [FogSetting(t, r) for t in fog_types for r in ranges]


def config_from_dict(data: dict) -> ExperimentConfig:
    allowed = {f.name for f in dataclasses.fields(ExperimentConfig)} | set()
    _check_keys(data, allowed, "")
    cfg = ExperimentConfig()
    if "scenarios" in data:
        cfg.scenarios = [_parse_scenario(t, _join("scenarios", i)) for i, t in enumerate(_take(data, "scenarios", "", list))]
    if "fog" in data:
        cfg.fog = _parse_fog(_take(data, "fog", "", dict), "fog")
    if "sensors" in data:
        cfg.sensors = [_parse_sensor(t, _join("sensors", i)) for i, t in enumerate(_take(data, "sensors", "", list))]
    if "targets" in data:
        targets = []
        for i, rho in enumerate(_take(data, "targets", "", list)):
            if not isinstance(rho, (int, float)) or isinstance(rho, bool) or not 0 <= rho <= 1:
                raise ValidationError("reflectivity must be a number in [0, 1]", _join("targets", i))
            targets.append(ReflectanceTarget(float(rho)))
        cfg.targets = targets
    if "layout" in data:
        cfg.layout = tuple(_build(LayoutItem, t, _join("layout", i)) for i, t in enumerate(_take(data, "layout", "", list)))
    if "simulation" in data:
        cfg.simulation = _build(SimulationParams, _take(data, "simulation", "", dict), "simulation")
    for key, kind in (("step_m", float), ("bin_width_m", float), ("render_scale", float), ("frames", int), ("seed", int), ("out", str)):
        if key in data:
            setattr(cfg, key, _take(data, key, "", kind))
    if "contrast_window_m" in data:
        w = _take(data, "contrast_window_m", "", list)
        if len(w) != 2 or not all(isinstance(v, (int, float)) for v in w):
            raise ValidationError("expected [start, end]", "contrast_window_m")
        cfg.contrast_window_m = (float(w[0]), float(w[1]))
    return cfg.validate()


def load_config(path: Path | str | None) -> ExperimentConfig:
    """Parse and validate a TOML config; ``None`` gives the default grid."""
    if path is None:
        return ExperimentConfig().validate()
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"invalid TOML: {exc}", str(path)) from None
    return config_from_dict(data)
