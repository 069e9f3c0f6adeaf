"""Range-gated camera timing model.

A laser pulse of length ``t_laser`` is emitted at t = 0.  The gate opens
``t_delay`` after the *end* of the pulse and stays open for ``t_gate``.  A
return from distance d arrives during ``[tau, tau + t_laser]`` with
``tau = 2 d / c``; the sensitivity at d is the overlap of that window with the
gate window, normalized to a peak of 1.  For ideal rectangular windows this
overlap is a trapezoid in d (a triangle when ``t_laser == t_gate``) supported
on ``[c t_delay / 2, c (t_delay + t_laser + t_gate) / 2]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .atmosphere import beta_of
from .errors import DomainError

SPEED_OF_LIGHT = 299_792_458.0  # m/s
_NS = 1e-9

#: Accumulated signal that fills the chip, in units of (laser intensity x micro exposures).
DEFAULT_FULL_WELL = 2000.0

QUAD_EPSABS = 1e-9
#: Backscatter integrals are truncated where the two-way transmission drops below this.
TRUNCATION_TRANSMISSION = 1e-12


@dataclass(frozen=True)
class GatingScheme:
    t_laser_ns: float
    t_delay_ns: float
    t_gate_ns: float
    micro_exposures: int = 1

    def __post_init__(self):
        for name in ("t_laser_ns", "t_delay_ns", "t_gate_ns"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite")
        if self.t_laser_ns <= 0 or self.t_gate_ns <= 0:
            raise DomainError("t_laser_ns and t_gate_ns must be positive")
        if self.t_delay_ns < 0:
            raise DomainError("t_delay_ns must be non-negative")
        if int(self.micro_exposures) != self.micro_exposures or self.micro_exposures < 1:
            raise DomainError("micro_exposures must be a positive integer")

    @property
    def slice_start_m(self) -> float:
        return slice_start(self)

    @property
    def slice_peak_m(self) -> float:
        """Nearest distance at which the sensitivity reaches 1."""
        return SPEED_OF_LIGHT * (self.t_delay_ns + min(self.t_laser_ns, self.t_gate_ns)) * _NS / 2

    @property
    def slice_plateau_end_m(self) -> float:
        return SPEED_OF_LIGHT * (self.t_delay_ns + max(self.t_laser_ns, self.t_gate_ns)) * _NS / 2

    @property
    def slice_end_m(self) -> float:
        return SPEED_OF_LIGHT * (self.t_delay_ns + self.t_laser_ns + self.t_gate_ns) * _NS / 2

    @property
    def slice_width_m(self) -> float:
        return self.slice_end_m - self.slice_start_m

    def gain(self, d):
        """Normalized sensitivity at distance(s) d, in [0, 1]."""
        tau = 2.0 * np.asarray(d, dtype=float) / SPEED_OF_LIGHT / _NS
        s = tau - self.t_delay_ns
        overlap = np.minimum(s + self.t_laser_ns, self.t_laser_ns + self.t_gate_ns) - np.maximum(s, self.t_laser_ns)
        return np.clip(overlap, 0.0, None) / min(self.t_laser_ns, self.t_gate_ns)

    def breakpoints(self) -> tuple[float, float, float, float]:
        return (self.slice_start_m, self.slice_peak_m, self.slice_plateau_end_m, self.slice_end_m)

    def profile_area_m(self) -> float:
        """Closed-form integral of the sensitivity over distance."""
        return SPEED_OF_LIGHT * max(self.t_laser_ns, self.t_gate_ns) * _NS / 2


#: Single slice recorded in the fog chamber.
CHAMBER_SCHEME = GatingScheme(t_laser_ns=160.0, t_delay_ns=90.0, t_gate_ns=160.0, micro_exposures=2000)


def slice_start(scheme: GatingScheme) -> float:
    """Distance [m] at which the slice begins, ``c t_delay / 2``."""
    return SPEED_OF_LIGHT * scheme.t_delay_ns * _NS / 2


@dataclass(frozen=True)
class GateProfile:
    """Sampled sensitivity of one gating scheme.

    ``gain`` is sampled on ``distance_m``; calling the profile evaluates the
    exact piecewise-linear sensitivity instead of interpolating.
    """

    scheme: GatingScheme
    distance_m: np.ndarray
    gain: np.ndarray
    slice_start_m: float
    slice_peak_m: float
    slice_end_m: float

    def __call__(self, d):
        return self.scheme.gain(d)


def gate_profile(scheme: GatingScheme, samples: int = 512, margin_m: float = 1.0) -> GateProfile:
    lo = max(scheme.slice_start_m - margin_m, 0.0)
    hi = scheme.slice_end_m + margin_m
    # include the breakpoints exactly so the sampled curve keeps its corners
    d = np.union1d(np.linspace(lo, hi, samples), scheme.breakpoints())
    g = scheme.gain(d)
    for arr in (d, g):
        arr.setflags(write=False)
    return GateProfile(scheme, d, g, scheme.slice_start_m, scheme.slice_peak_m, scheme.slice_end_m)


class GatedResponse(NamedTuple):
    intensity: np.ndarray | float
    saturated: np.ndarray | bool


def gated_target_response(
    scheme: GatingScheme,
    fog,
    rho,
    laser_intensity,
    d,
    full_well: float = DEFAULT_FULL_WELL,
) -> GatedResponse:
    """Chip intensity of a diffuse target of reflectivity ``rho`` at distance d.

    Each micro exposure collects ``laser_intensity * gain(d) * rho *
    exp(-2 beta d)`` (out-and-back extinction); ``micro_exposures`` of them
    are summed and divided by ``full_well``.  Values above 1 are clipped and
    reported in ``saturated``.
    """
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distance must be positive")
    rho = np.asarray(rho, dtype=float)
    if np.any((rho < 0) | (rho > 1)):
        raise DomainError("rho must lie in [0, 1]")
    if np.any(np.asarray(laser_intensity) < 0):
        raise DomainError("laser_intensity must be non-negative")
    if not full_well > 0:
        raise DomainError("full_well must be positive")
    beta = beta_of(fog)
    signal = (
        np.asarray(laser_intensity, dtype=float)
        * scheme.micro_exposures
        * scheme.gain(d)
        * rho
        * np.exp(-2.0 * beta * d)
        / full_well
    )
    saturated = signal > 1.0
    intensity = np.minimum(signal, 1.0)
    if intensity.ndim == 0:
        return GatedResponse(float(intensity), bool(saturated))
    return GatedResponse(intensity, saturated)


def _truncation_range(beta: float) -> float:
    return -math.log(TRUNCATION_TRANSMISSION) / (2.0 * beta)


def backscatter_integral(scheme: GatingScheme | None, fog, laser_intensity: float = 1.0) -> float:
    """Relative fog backscatter ``laser * integral gain(r) beta exp(-2 beta r) dr``.

    ``scheme=None`` is the ungated exposure (gain 1 everywhere), whose exact
    value is ``laser_intensity / 2`` for any beta > 0.  The integral runs over
    ``(0, r_max)`` with ``exp(-2 beta r_max) = 1e-12``, split at the
    sensitivity breakpoints.
    """
    beta = beta_of(fog)
    if beta == 0.0:
        return 0.0
    r_max = _truncation_range(beta)

    def integrand(r):
        return beta * math.exp(-2.0 * beta * r)

    if scheme is None:
        edges = [0.0, r_max]
        gain = lambda r: 1.0  # noqa: E731
    else:
        edges = [0.0, *scheme.breakpoints()]
        edges = sorted({min(e, r_max) for e in edges} | {r_max})
        gain = lambda r: float(scheme.gain(r))  # noqa: E731

    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        value, _ = integrate.quad(lambda r: gain(r) * integrand(r), a, b, epsabs=QUAD_EPSABS, epsrel=1e-12, limit=200)
        total += value
    return laser_intensity * total


def suppression_ratio(scheme: GatingScheme, fog) -> float:
    """Gated over ungated backscatter; below 1 whenever the slice starts beyond 0."""
    ungated = backscatter_integral(None, fog)
    if ungated == 0.0:
        return 0.0
    return backscatter_integral(scheme, fog) / ungated
