"""Closed-form fog optics.

Exponential scattering model for an observer looking through homogeneous
fog: inverse-square scene radiance, exponential attenuation, air-light that
saturates at the horizon brightness, and the visibility/attenuation relation
(Koschmieder's law).  Intensities are normalized chip fractions in [0, 1].

Every function accepts Python floats or numpy arrays and broadcasts; scalar
inputs give scalar (numpy float) outputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

#: Contrast threshold for the meteorological visual range.
DEFAULT_EPSILON = 0.05


class FogType(str, enum.Enum):
    RADIATION = "radiation"
    ADVECTION = "advection"


#: Mean droplet diameter per fog type, micrometers.  Metadata only.
DROPLET_DIAMETER_UM = {FogType.RADIATION: 2.0, FogType.ADVECTION: 6.0}


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon!r}")


def _check_nonnegative(name: str, value) -> None:
    if np.any(np.asarray(value) < 0):
        raise DomainError(f"{name} must be non-negative")


def beta_from_visibility(visibility_m, epsilon: float = DEFAULT_EPSILON):
    """Attenuation coefficient [1/m] for a meteorological visibility [m].

    ``beta = -ln(epsilon) / V``.  With the default 5 % threshold this is
    close to the usual ``3 / V`` rule of thumb (0.14 % off).
    """
    _check_epsilon(epsilon)
    v = np.asarray(visibility_m, dtype=float)
    if np.any(~(v > 0)):
        raise DomainError("visibility_m must be positive")
    return -math.log(epsilon) / v


def visibility_from_beta(beta_per_m, epsilon: float = DEFAULT_EPSILON):
    """Inverse of :func:`beta_from_visibility`."""
    _check_epsilon(epsilon)
    b = np.asarray(beta_per_m, dtype=float)
    if np.any(~(b > 0)):
        raise DomainError("beta_per_m must be positive")
    return -math.log(epsilon) / b


def scene_radiance(i0, d):
    """Inverse-square radiance ``i0 / d**2`` of a point source at distance d."""
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("distance must be positive (singular at d = 0)")
    _check_nonnegative("i0", i0)
    return np.asarray(i0, dtype=float) / d**2


def attenuated_intensity(i0, beta_per_m, d):
    """Scene radiance after exponential extinction over distance d."""
    _check_nonnegative("beta_per_m", beta_per_m)
    return scene_radiance(i0, d) * np.exp(-np.asarray(beta_per_m, dtype=float) * d)


def airlight(i_inf, beta_per_m, d):
    """Air-light ``I_inf * (1 - exp(-beta d))`` accumulated along a path of length d."""
    _check_nonnegative("i_inf", i_inf)
    _check_nonnegative("beta_per_m", beta_per_m)
    _check_nonnegative("d", d)
    return np.asarray(i_inf, dtype=float) * -np.expm1(-np.asarray(beta_per_m, dtype=float) * np.asarray(d, dtype=float))


@dataclass(frozen=True)
class ScatterParams:
    """Parameters of the combined attenuation + air-light model."""

    i0: float
    i_inf: float
    beta_per_m: float
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        _check_epsilon(self.epsilon)
        for name in ("i0", "i_inf"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise DomainError(f"{name} must be finite and non-negative, got {value!r}")
        if not (math.isfinite(self.beta_per_m) and self.beta_per_m >= 0):
            raise DomainError(f"beta_per_m must be finite and non-negative, got {self.beta_per_m!r}")

    @property
    def visibility_m(self) -> float:
        return float(visibility_from_beta(self.beta_per_m, self.epsilon))


def observed_intensity(params: ScatterParams, d):
    """Intensity on the chip: attenuated radiance plus air-light.

    Tends to ``params.i_inf`` for large d.
    """
    return attenuated_intensity(params.i0, params.beta_per_m, d) + airlight(
        params.i_inf, params.beta_per_m, d
    )


def adapted_intensity(i0, i_inf, d0, beta_per_m, beta_a_per_m, d):
    """Illumination-shifted scattering model used for fitting target traces.

    ``i0 * exp(-beta (d - d0)) + i_inf * (1 - exp(-beta_a (d - d0)))``.

    The model is undefined before the illumination onset ``d0``; there the
    path offset is clamped to zero so the function returns ``i0``.
    """
    _check_nonnegative("beta_per_m", beta_per_m)
    _check_nonnegative("beta_a_per_m", beta_a_per_m)
    x = np.maximum(np.asarray(d, dtype=float) - np.asarray(d0, dtype=float), 0.0)
    return np.asarray(i0, dtype=float) * np.exp(-np.asarray(beta_per_m, dtype=float) * x) - np.asarray(
        i_inf, dtype=float
    ) * np.expm1(-np.asarray(beta_a_per_m, dtype=float) * x)


@dataclass(frozen=True)
class FogCondition:
    """Atmospheric state of one experiment.

    ``beta_per_m`` is derived from the visibility and is not an init argument.
    ``visibility_m=math.inf`` describes clear air.
    """

    fog_type: FogType
    visibility_m: float
    droplet_mean_diameter_um: float | None = None
    epsilon: float = DEFAULT_EPSILON
    beta_per_m: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "fog_type", FogType(self.fog_type))
        # infinite visibility is clear air (beta = 0)
        if not self.visibility_m > 0:
            raise DomainError(f"visibility_m must be positive, got {self.visibility_m!r}")
        if self.droplet_mean_diameter_um is None:
            object.__setattr__(self, "droplet_mean_diameter_um", DROPLET_DIAMETER_UM[self.fog_type])
        elif not self.droplet_mean_diameter_um > 0:
            raise DomainError("droplet_mean_diameter_um must be positive")
        object.__setattr__(self, "beta_per_m", float(beta_from_visibility(self.visibility_m, self.epsilon)))

    def is_consistent(self, rtol: float = 1e-12) -> bool:
        expected = -math.log(self.epsilon) / self.visibility_m
        return math.isclose(self.beta_per_m, expected, rel_tol=rtol)


def beta_of(fog) -> float:
    """Attenuation coefficient of a :class:`FogCondition` or a bare number."""
    if isinstance(fog, FogCondition):
        return fog.beta_per_m
    beta = float(fog)
    if not beta >= 0:
        raise DomainError(f"attenuation coefficient must be non-negative, got {beta!r}")
    return beta
