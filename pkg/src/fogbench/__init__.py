"""Fog-chamber benchmark of standard and range-gated cameras.

Physics (`atmosphere`, `gated`), a synthetic chamber (`scene`), image and
trace metrics (`metrics`), a model fit (`fitting`) and the `fogbench`
command line (`cli`).
"""

__version__ = "0.1.0"

from .atmosphere import (
    FogCondition,
    FogType,
    ScatterParams,
    adapted_intensity,
    airlight,
    attenuated_intensity,
    beta_from_visibility,
    observed_intensity,
    scene_radiance,
    visibility_from_beta,
)
from .errors import DomainError, FogbenchError, NumericalError, ValidationError
from .fitting import FitParams, FitProblem, FitResult, fit_adapted_model, fit_trace
from .gated import CHAMBER_SCHEME, GatingScheme, backscatter_integral, gate_profile, gated_target_response, suppression_ratio
from .metrics import contrast_window, entropy, michelson_contrast, peak_intensity, rms_contrast
from .scene import (
    FrameBuffer,
    ReflectanceTarget,
    Scenario,
    SensorModel,
    TargetTrace,
    render_frame,
    simulate_sweep,
)

__all__ = [
    "DomainError", "FitParams", "FitProblem", "FitResult", "FogCondition", "FogType", "FogbenchError", "FrameBuffer",
    "GatingScheme", "NumericalError", "ReflectanceTarget", "ScatterParams", "Scenario", "SensorModel", "CHAMBER_SCHEME",
    "TargetTrace", "ValidationError", "__version__", "adapted_intensity", "airlight", "attenuated_intensity",
    "backscatter_integral", "beta_from_visibility", "contrast_window", "entropy", "fit_adapted_model", "fit_trace",
    "gate_profile", "gated_target_response", "michelson_contrast", "observed_intensity", "peak_intensity",
    "render_frame", "rms_contrast", "scene_radiance", "simulate_sweep", "suppression_ratio", "visibility_from_beta",
]
