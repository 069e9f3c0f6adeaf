"""Synthetic fog-chamber experiment.

Reflectance targets are swept along the chamber axis and observed by a
standard (headlight-lit) camera or a gated (laser-lit) camera.  The standard
camera follows the illumination-shifted scattering model, the gated camera
follows the gate sensitivity with two-way extinction.  ``render_frame``
ray-casts a simple chamber (textured floor and side walls, reflectance
panels, open far end) to produce quantized frames for entropy evaluation.

Units: meters, radians, normalized chip intensity in [0, 1].
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import gated
from .atmosphere import adapted_intensity, airlight, beta_of
from .errors import DomainError, ValidationError

STANDARD_REFLECTIVITIES = (0.05, 0.50, 0.90)
DEFAULT_BIN_WIDTH_M = 1.0


@dataclass(frozen=True)
class ReflectanceTarget:
    rho: float
    mount_height_m: float = 1.6

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [0, 1], got {self.rho!r}")


STANDARD_TARGETS = tuple(ReflectanceTarget(r) for r in STANDARD_REFLECTIVITIES)


class ScenarioKind(str, enum.Enum):
    PASSIVE = "passive"
    ONCOMING_CAR = "oncoming_car"


@dataclass(frozen=True)
class OncomingSource:
    """High beams of an oncoming car, seen from the test vehicle."""

    position_m: float = 25.0
    intensity: float = 0.5
    angular_sigma_rad: float = 0.1
    lateral_m: float = -1.5
    height_m: float = 0.7

    def __post_init__(self):
        if self.position_m <= 0 or self.intensity < 0 or self.angular_sigma_rad <= 0:
            raise DomainError("oncoming source needs position_m > 0, intensity >= 0, angular_sigma_rad > 0")


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind = ScenarioKind.PASSIVE
    chamber_length_m: float = 30.0
    chamber_width_m: float = 5.5
    chamber_height_m: float = 2.0
    oncoming_source: OncomingSource | None = None
    #: Horizon brightness I_inf seen by the standard camera.
    horizon_brightness: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if min(self.chamber_length_m, self.chamber_width_m, self.chamber_height_m) <= 0:
            raise DomainError("chamber dimensions must be positive")
        if (self.kind is ScenarioKind.ONCOMING_CAR) != (self.oncoming_source is not None):
            raise DomainError("oncoming_source must be given exactly for the oncoming_car scenario")
        if not 0 <= self.horizon_brightness <= 1:
            raise DomainError("horizon_brightness must lie in [0, 1]")

    @classmethod
    def passive(cls, **kw) -> Scenario:
        return cls(kind=ScenarioKind.PASSIVE, **kw)

    @classmethod
    def oncoming_car(cls, source: OncomingSource | None = None, **kw) -> Scenario:
        return cls(kind=ScenarioKind.ONCOMING_CAR, oncoming_source=source or OncomingSource(), **kw)


class SensorKind(str, enum.Enum):
    STANDARD = "standard"
    GATED = "gated"


@dataclass(frozen=True)
class NoiseModel:
    """Per-pixel noise: ``std = sqrt(read_sigma**2 + shot_scale * I)``."""

    read_sigma: float = 0.002
    shot_scale: float = 2e-5
    seed: int = 0

    def __post_init__(self):
        if self.read_sigma < 0 or self.shot_scale < 0:
            raise DomainError("noise parameters must be non-negative")

    @property
    def enabled(self) -> bool:
        return self.read_sigma > 0 or self.shot_scale > 0

    def std(self, intensity):
        return np.sqrt(self.read_sigma**2 + self.shot_scale * np.clip(intensity, 0.0, None))


NOISELESS = NoiseModel(0.0, 0.0)


@dataclass(frozen=True)
class SensorModel:
    kind: SensorKind
    bit_depth: int = 12
    resolution: tuple[int, int] = (1980, 1088)
    noise: NoiseModel = field(default_factory=NoiseModel)
    gating: gated.GatingScheme | None = None
    horizontal_fov_rad: float = math.radians(40.0)
    full_well: float = gated.DEFAULT_FULL_WELL
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", SensorKind(self.kind))
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))
        if (self.kind is SensorKind.GATED) != (self.gating is not None):
            raise DomainError("gating must be given exactly for gated sensors")
        if not 8 <= self.bit_depth <= 16:
            raise DomainError(f"bit_depth must lie in [8, 16], got {self.bit_depth}")
        if len(self.resolution) != 2 or min(self.resolution) < 1:
            raise DomainError("resolution must be (width, height) with positive entries")
        if not 0 < self.horizontal_fov_rad < math.pi:
            raise DomainError("horizontal_fov_rad must lie in (0, pi)")
        if not self.name:
            object.__setattr__(self, "name", self.kind.value)

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    @classmethod
    def standard(cls, **kw) -> SensorModel:
        """CMOS camera as evaluated: 1980x1088, 12 bit."""
        kw.setdefault("resolution", (1980, 1088))
        kw.setdefault("bit_depth", 12)
        return cls(kind=SensorKind.STANDARD, **kw)

    @classmethod
    def gated(cls, scheme: gated.GatingScheme = gated.CHAMBER_SCHEME, **kw) -> SensorModel:
        """Gated NIR camera: 1280x960, one slice with the given scheme."""
        kw.setdefault("resolution", (1280, 960))
        kw.setdefault("bit_depth", 10)
        return cls(kind=SensorKind.GATED, gating=scheme, **kw)

    def scaled(self, factor: float) -> SensorModel:
        """Same sensor rendered at a fraction of its native resolution."""
        w, h = self.resolution
        return dataclasses.replace(self, resolution=(max(1, round(w * factor)), max(1, round(h * factor))))


@dataclass(frozen=True)
class SimulationParams:
    """Free illumination and geometry constants of the simulated chamber.

    The measured setup does not publish headlight or laser power; these
    defaults put the 90 % target near 0.4 chip intensity for the standard
    camera, as in the measured traces.
    """

    headlight_gain: float = 0.45
    illumination_onset_m: float = 5.0
    #: beta_a / beta used by the standard camera's air-light term.
    airlight_beta_ratio: float = 1.0
    #: First sweep depth; ``None`` starts at the illumination onset.
    sweep_start_m: float | None = None
    #: Number of pixels averaged into one target sample.
    target_pixels: int = 64
    laser_intensity: float = 1.0
    #: Rescale laser power per fog so the brightest white return hits ``laser_target_level``.
    adapt_laser: bool = True
    laser_target_level: float = 0.9
    #: Fraction of fog backscatter reaching the gated chip, relative to a white target.
    backscatter_gain: float = 0.05
    camera_height_m: float = 1.3
    floor_rho: tuple[float, float] = (0.05, 0.45)
    wall_rho: tuple[float, float] = (0.10, 0.60)
    tile_m: float = 0.5
    texture_seed: int = 7

    def __post_init__(self):
        if self.illumination_onset_m < 0 or self.headlight_gain < 0:
            raise DomainError("illumination parameters must be non-negative")
        if self.target_pixels < 1:
            raise DomainError("target_pixels must be >= 1")


DEFAULT_PARAMS = SimulationParams()


# --------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class BinnedStats:
    center_m: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray

    def __len__(self) -> int:
        return len(self.center_m)


def bin_by_depth(depth_m, values, bin_width_m: float = DEFAULT_BIN_WIDTH_M) -> BinnedStats:
    """Per-bin mean and sample standard deviation of values by depth.

    Bins are ``[k w, (k + 1) w)``; empty bins are omitted and a single-sample
    bin has std 0.
    """
    if not bin_width_m > 0:
        raise DomainError("bin_width_m must be positive")
    depth = np.asarray(depth_m, dtype=float)
    vals = np.asarray(values, dtype=float)
    if depth.shape != vals.shape:
        raise DomainError("depth_m and values must have the same shape")
    if depth.size == 0:
        empty = np.empty(0)
        return BinnedStats(empty, empty, empty, np.empty(0, dtype=int))
    # guard against 5.999999999 style representation error landing one bin low
    idx = np.floor(np.round(depth / bin_width_m, 9)).astype(np.int64)
    keys, inverse, count = np.unique(idx, return_inverse=True, return_counts=True)
    total = np.bincount(inverse, weights=vals)
    mean = total / count
    sq = np.bincount(inverse, weights=(vals - mean[inverse]) ** 2)
    std = np.sqrt(np.divide(sq, count - 1, out=np.zeros_like(sq), where=count > 1))
    return BinnedStats((keys + 0.5) * bin_width_m, mean, std, count)


@dataclass
class TargetTrace:
    """Intensity of one reflectance target versus depth.

    ``depth_m``/``intensity``/``std`` hold raw samples and may be empty when
    the trace was read back from binned CSV data.
    """

    rho: float
    binned: BinnedStats
    depth_m: np.ndarray = field(default_factory=lambda: np.empty(0))
    intensity: np.ndarray = field(default_factory=lambda: np.empty(0))
    std: np.ndarray = field(default_factory=lambda: np.empty(0))

    @classmethod
    def from_samples(cls, rho, depth_m, intensity, std=None, bin_width_m=DEFAULT_BIN_WIDTH_M) -> TargetTrace:
        depth = np.asarray(depth_m, dtype=float)
        inten = np.asarray(intensity, dtype=float)
        sd = np.zeros_like(inten) if std is None else np.asarray(std, dtype=float)
        return cls(rho, bin_by_depth(depth, inten, bin_width_m), depth, inten, sd)

    @classmethod
    def from_bins(cls, rho, center_m, mean, std=None, count=None) -> TargetTrace:
        center = np.asarray(center_m, dtype=float)
        order = np.argsort(center, kind="stable")
        mean = np.asarray(mean, dtype=float)[order]
        std = np.zeros_like(mean) if std is None else np.asarray(std, dtype=float)[order]
        count = np.ones(len(center), dtype=int) if count is None else np.asarray(count, dtype=int)[order]
        return cls(rho, BinnedStats(center[order], mean, std, count))


def sweep_depths(scenario: Scenario, step_m: float, params: SimulationParams = DEFAULT_PARAMS) -> np.ndarray:
    if not step_m > 0:
        raise DomainError("step_m must be positive")
    start = params.illumination_onset_m if params.sweep_start_m is None else params.sweep_start_m
    start = max(start, step_m) if start <= 0 else start
    n = int(math.floor((scenario.chamber_length_m - start) / step_m + 1e-9)) + 1
    if n < 1:
        raise DomainError("sweep start lies beyond the chamber")
    return np.round(start + step_m * np.arange(n), 9)


def laser_scale(sensor: SensorModel, fog, scenario: Scenario, params: SimulationParams = DEFAULT_PARAMS) -> float:
    """Laser intensity per micro exposure used for this fog.

    With ``params.adapt_laser`` the power is set so that a white target at
    the brightest in-chamber depth reaches ``params.laser_target_level``;
    the illumination is tuned to the fog, as done manually in the chamber.
    """
    if not params.adapt_laser:
        return params.laser_intensity
    scheme = sensor.gating
    beta = beta_of(fog)
    lo = scheme.slice_start_m
    hi = min(scheme.slice_end_m, scenario.chamber_length_m)
    if hi <= lo:
        return params.laser_intensity
    d = np.linspace(lo, hi, 2001)
    peak = np.max(scheme.gain(d) * np.exp(-2.0 * beta * d)) * scheme.micro_exposures / sensor.full_well
    if peak <= 0:
        return params.laser_intensity
    return params.laser_target_level / peak


def gated_backscatter(sensor: SensorModel, fog, laser: float, max_range_m, params=DEFAULT_PARAMS):
    """Fog backscatter collected in front of an occluder at ``max_range_m``."""
    scheme = sensor.gating
    max_range = np.atleast_1d(np.asarray(max_range_m, dtype=float))
    scale = params.backscatter_gain * laser * scheme.micro_exposures / sensor.full_well
    beta = beta_of(fog)
    if beta == 0 or scale == 0:
        return np.zeros_like(max_range) if np.ndim(max_range_m) else 0.0
    # cumulative integral on a fine grid, then interpolate per occluder depth
    grid_end = max(float(max_range.max()), scheme.slice_end_m)
    grid = np.union1d(np.linspace(0.0, grid_end, 4001), scheme.breakpoints())
    f = scheme.gain(grid) * beta * np.exp(-2.0 * beta * grid)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(grid))])
    out = scale * np.interp(max_range, grid, cum)
    return out if np.ndim(max_range_m) else float(out[0])


def _source_vector(scenario: Scenario, params: SimulationParams) -> np.ndarray:
    src = scenario.oncoming_source
    return np.array([src.lateral_m, src.height_m - params.camera_height_m, src.position_m])


def angle_to_source(scenario: Scenario, depth_m, lateral_m=0.0, height_m=1.6, params=DEFAULT_PARAMS):
    """Angle between the line of sight to a point and to the oncoming headlights."""
    if scenario.oncoming_source is None:
        raise DomainError("scenario has no oncoming source")
    depth = np.asarray(depth_m, dtype=float)
    v = np.stack(np.broadcast_arrays(np.asarray(lateral_m, float), np.asarray(height_m, float) - params.camera_height_m, depth), axis=-1)
    s = _source_vector(scenario, params)
    cos = (v @ s) / (np.linalg.norm(v, axis=-1) * np.linalg.norm(s))
    return np.arccos(np.clip(cos, -1.0, 1.0))


def corona_intensity(
    scenario: Scenario,
    fog,
    angle_rad=None,
    *,
    depth_m=None,
    sensor: SensorModel | None = None,
    params: SimulationParams = DEFAULT_PARAMS,
):
    """Glare blob around the oncoming headlights.

    ``S exp(-theta^2 / 2 sigma^2) (1 - exp(-beta L))`` with L the distance to
    the source; pass either the angle from the source direction or the depth
    of an on-axis target.  For a gated sensor the result is multiplied by the
    gated/ungated backscatter ratio.
    """
    if scenario.kind is not ScenarioKind.ONCOMING_CAR:
        raise DomainError("corona_intensity requires the oncoming_car scenario")
    if (angle_rad is None) == (depth_m is None):
        raise DomainError("pass exactly one of angle_rad or depth_m")
    src = scenario.oncoming_source
    theta = angle_to_source(scenario, depth_m, params=params) if angle_rad is None else np.asarray(angle_rad, float)
    beta = beta_of(fog)
    path = float(np.linalg.norm(_source_vector(scenario, params)))
    value = src.intensity * np.exp(-(theta**2) / (2 * src.angular_sigma_rad**2)) * -math.expm1(-beta * path)
    if sensor is not None and sensor.kind is SensorKind.GATED:
        value = value * gated.suppression_ratio(sensor.gating, beta)
    return value


def _clean_trace(scenario, fog, sensor, rho, depths, params):
    beta = beta_of(fog)
    if sensor.kind is SensorKind.STANDARD:
        clean = adapted_intensity(
            params.headlight_gain * rho,
            scenario.horizon_brightness,
            params.illumination_onset_m,
            beta,
            params.airlight_beta_ratio * beta,
            depths,
        )
    else:
        laser = laser_scale(sensor, fog, scenario, params)
        clean = gated.gated_target_response(
            sensor.gating, beta, rho, laser, depths, full_well=sensor.full_well
        ).intensity
        clean = clean + gated_backscatter(sensor, beta, laser, depths, params)
    if scenario.kind is ScenarioKind.ONCOMING_CAR:
        clean = clean + corona_intensity(scenario, beta, depth_m=depths, sensor=sensor, params=params)
    return np.clip(clean, 0.0, 1.0)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def simulate_sweep(
    scenario: Scenario,
    fog,
    sensor: SensorModel,
    targets: Sequence[ReflectanceTarget],
    step_m: float,
    *,
    params: SimulationParams = DEFAULT_PARAMS,
    bin_width_m: float = DEFAULT_BIN_WIDTH_M,
    seed=None,
) -> list[TargetTrace]:
    """Move each target along the viewing axis and record its mean intensity.

    One :class:`TargetTrace` per target.  Each sample is the mean over
    ``params.target_pixels`` noisy pixels; its ``std`` is the per-pixel
    noise std.  ``seed`` (int or sequence of ints) defaults to the sensor's
    noise seed; target k draws from the stream ``[*seed, k]``.
    """
    targets = list(targets)
    if not targets:
        raise ValidationError("at least one reflectance target is required", "targets")
    depths = sweep_depths(scenario, step_m, params)
    base = list(np.atleast_1d(sensor.noise.seed if seed is None else seed))
    traces = []
    for k, target in enumerate(targets):
        clean = _clean_trace(scenario, fog, sensor, target.rho, depths, params)
        std = sensor.noise.std(clean)
        if sensor.noise.enabled:
            rng = _rng([*map(int, base), k])
            noisy = clean + rng.standard_normal(clean.shape) * std / math.sqrt(params.target_pixels)
            noisy = np.clip(noisy, 0.0, 1.0)
        else:
            noisy = clean
        traces.append(TargetTrace.from_samples(target.rho, depths, noisy, std, bin_width_m))
    return traces


# --------------------------------------------------------------------------
# frames


@dataclass(frozen=True)
class FrameBuffer:
    width: int
    height: int
    bit_depth: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape[:2] != (self.height, self.width):
            raise DomainError(f"pixel grid {px.shape[:2]} does not match {self.height}x{self.width}")
        if not np.issubdtype(px.dtype, np.integer):
            raise DomainError("pixels must be integers")
        if px.size and (px.min() < 0 or px.max() > (1 << self.bit_depth) - 1):
            raise DomainError("pixel values exceed the bit depth")

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1


@dataclass(frozen=True)
class LayoutItem:
    """A square reflectance panel facing the camera."""

    rho: float
    depth_m: float
    lateral_m: float = 0.0
    height_m: float = 1.6
    size_m: float = 0.5


def default_layout(depth_m: float = 18.0, spacing_m: float = 1.0) -> tuple[LayoutItem, ...]:
    """The three calibrated targets side by side at one depth."""
    return tuple(
        LayoutItem(rho, depth_m, lateral)
        for rho, lateral in zip(STANDARD_REFLECTIVITIES, (-spacing_m, 0.0, spacing_m))
    )


def _validate_layout(scenario: Scenario, layout: Iterable[LayoutItem]) -> tuple[LayoutItem, ...]:
    items = tuple(layout)
    for i, it in enumerate(items):
        half = it.size_m / 2
        inside = (
            0 < it.depth_m <= scenario.chamber_length_m
            and abs(it.lateral_m) + half <= scenario.chamber_width_m / 2
            and 0 <= it.height_m - half
            and it.height_m + half <= scenario.chamber_height_m
            and 0 <= it.rho <= 1
        )
        if not inside:
            raise ValidationError("object lies outside the chamber", f"layout[{i}]")
    return items


@dataclass(frozen=True)
class _Geometry:
    depth: np.ndarray        # axial depth of the first hit, chamber length for background
    rho: np.ndarray          # reflectivity of the hit, 0 for background
    background: np.ndarray   # bool mask
    angle: np.ndarray | None  # angle to oncoming headlights


def _tile_texture(u, v, tile, lo_hi, seed):
    # one reflectivity per tile from a fixed lookup table; seeded once per surface
    lo, hi = lo_hi
    table = np.random.default_rng(seed).uniform(lo, hi, size=(257, 257))
    iu = np.floor(u / tile).astype(np.int64) % 257
    iv = np.floor(v / tile).astype(np.int64) % 257
    return table[iu, iv]


@functools.lru_cache(maxsize=32)
def _geometry(scenario: Scenario, resolution, hfov, layout, params: SimulationParams) -> _Geometry:
    w, h = resolution
    f = (w / 2) / math.tan(hfov / 2)
    xs = (np.arange(w) + 0.5 - w / 2) / f
    ys = -(np.arange(h) + 0.5 - h / 2) / f
    dx, dy = np.meshgrid(xs, ys)
    cam_h = params.camera_height_m
    L = scenario.chamber_length_m
    half_w = scenario.chamber_width_m / 2

    # parametric ray distance t equals axial depth because dz == 1
    with np.errstate(divide="ignore"):
        t_floor = np.where(dy < 0, cam_h / np.where(dy < 0, -dy, 1.0), np.inf)
        t_ceiling = np.where(dy > 0, (scenario.chamber_height_m - cam_h) / np.where(dy > 0, dy, 1.0), np.inf)
        t_wall = np.where(dx != 0, half_w / np.where(dx != 0, np.abs(dx), 1.0), np.inf)
    t_surface = np.minimum(np.minimum(t_floor, t_ceiling), t_wall)
    background = t_surface >= L
    t_best = np.where(background, L, t_surface)

    # texture coordinates of whichever surface was hit; finite everywhere
    on_wall = (t_wall <= t_floor) & (t_wall <= t_ceiling)
    on_ceiling = ~on_wall & (t_ceiling < t_floor)
    u = np.where(on_wall, t_best + 1000.0 * (dx > 0), dx * t_best)
    v = np.where(on_wall, cam_h + dy * t_best, t_best + 1000.0 * on_ceiling)
    lo, hi = params.wall_rho
    floor_lo, floor_hi = params.floor_rho
    texture = _tile_texture(u, v, params.tile_m, (0.0, 1.0), params.texture_seed)
    rho = np.where(on_wall | on_ceiling, lo + (hi - lo) * texture, floor_lo + (floor_hi - floor_lo) * texture)
    rho = np.where(background, 0.0, rho)

    for item in layout:
        t = item.depth_m
        px, py = dx * t, cam_h + dy * t
        half = item.size_m / 2
        hit = (t < t_best) & (np.abs(px - item.lateral_m) <= half) & (np.abs(py - item.height_m) <= half)
        t_best = np.where(hit, t, t_best)
        rho = np.where(hit, item.rho, rho)
        background &= ~hit

    angle = None
    if scenario.oncoming_source is not None:
        s = _source_vector(scenario, params)
        cos = (dx * s[0] + dy * s[1] + s[2]) / (np.sqrt(dx**2 + dy**2 + 1) * np.linalg.norm(s))
        angle = np.arccos(np.clip(cos, -1.0, 1.0))
    for arr in (t_best, rho, background):
        arr.setflags(write=False)
    return _Geometry(t_best, rho, background, angle)


def clean_frame(scenario, fog, sensor: SensorModel, layout, params: SimulationParams = DEFAULT_PARAMS) -> np.ndarray:
    """Noise-free chip intensity per pixel, before quantization."""
    layout = _validate_layout(scenario, layout)
    geo = _geometry(scenario, sensor.resolution, sensor.horizontal_fov_rad, layout, params)
    beta = beta_of(fog)
    if sensor.kind is SensorKind.STANDARD:
        lit = adapted_intensity(
            params.headlight_gain * geo.rho,
            scenario.horizon_brightness,
            params.illumination_onset_m,
            beta,
            params.airlight_beta_ratio * beta,
            geo.depth,
        )
        # open far end: pure air-light from the full chamber length
        sky = adapted_intensity(
            0.0, scenario.horizon_brightness, params.illumination_onset_m, beta,
            params.airlight_beta_ratio * beta, scenario.chamber_length_m,
        )
        # surfaces nearer than the headlight onset are outside the beams: path air-light only
        unlit = airlight(scenario.horizon_brightness, params.airlight_beta_ratio * beta, geo.depth)
        img = np.where(geo.background, sky, np.where(geo.depth < params.illumination_onset_m, unlit, lit))
    else:
        laser = laser_scale(sensor, fog, scenario, params)
        img = gated.gated_target_response(
            sensor.gating, beta, geo.rho, laser, geo.depth, full_well=sensor.full_well
        ).intensity
        img = img + gated_backscatter(sensor, beta, laser, geo.depth, params)
    if geo.angle is not None:
        img = img + corona_intensity(scenario, beta, geo.angle, sensor=sensor, params=params)
    return np.clip(img, 0.0, 1.0)


def illuminated_region(
    scenario: Scenario,
    sensor: SensorModel,
    scheme: gated.GatingScheme,
    layout,
    params: SimulationParams = DEFAULT_PARAMS,
) -> tuple[int, int, int, int]:
    """Bounding rectangle ``(x, y, width, height)`` of pixels lit by both sources.

    Headlights light everything beyond the illumination onset, the laser
    everything beyond the slice start of ``scheme``.
    """
    layout = _validate_layout(scenario, layout)
    geo = _geometry(scenario, sensor.resolution, sensor.horizontal_fov_rad, layout, params)
    lit = geo.depth >= max(params.illumination_onset_m, scheme.slice_start_m)
    if not lit.any():
        raise DomainError("no pixel is lit by both headlights and laser")
    rows = np.flatnonzero(lit.any(axis=1))
    cols = np.flatnonzero(lit.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1)


def quantize(intensity, bit_depth: int) -> np.ndarray:
    """Scale [0, 1] to integer codes, rounding half away from zero, then clamp."""
    scaled = np.asarray(intensity, dtype=float) * ((1 << bit_depth) - 1)
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, 0, (1 << bit_depth) - 1).astype(np.uint16)


def render_frame(
    scenario: Scenario,
    fog,
    sensor: SensorModel,
    target_layout: Iterable[LayoutItem],
    rng_seed,
    params: SimulationParams = DEFAULT_PARAMS,
) -> FrameBuffer:
    """Render one noisy, quantized frame; identical inputs give identical pixels."""
    img = clean_frame(scenario, fog, sensor, target_layout, params)
    if sensor.noise.enabled:
        rng = _rng(rng_seed)
        img = img + rng.standard_normal(img.shape) * sensor.noise.std(img)
    w, h = sensor.resolution
    px = quantize(img, sensor.bit_depth)
    px.setflags(write=False)
    return FrameBuffer(w, h, sensor.bit_depth, px)


def render_series(scenario, fog, sensor, layout, seed, frames: int, params=DEFAULT_PARAMS) -> list[FrameBuffer]:
    """``frames`` frames; frame k uses the RNG stream ``[*seed, k]``."""
    base = [int(s) for s in np.atleast_1d(seed)]
    return [render_frame(scenario, fog, sensor, layout, [*base, k], params) for k in range(frames)]
