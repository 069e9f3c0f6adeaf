"""Image and trace metrics: entropy, Michelson and RMS contrast, peak intensity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, ValidationError
from .scene import STANDARD_REFLECTIVITIES, FrameBuffer, TargetTrace

DEFAULT_CONTRAST_WINDOW_M = (5.0, 10.0)


class Region(NamedTuple):
    """Pixel rectangle: top-left corner (x, y) and size."""

    x: int
    y: int
    width: int
    height: int


@dataclass(frozen=True)
class EntropyReport:
    bits: float
    histogram_bins: int
    pixel_count: int
    region: Region | None = None


@dataclass(frozen=True)
class ContrastReport:
    michelson: float
    rms: float
    i5: float
    i50: float
    i90: float


def _channel_entropy(values: np.ndarray, bins: int) -> float:
    counts = np.bincount(values.ravel(), minlength=bins)
    p = counts[counts > 0] / values.size
    # exact integer counts keep the result independent of pixel order
    return float(max(0.0, -np.sum(p * np.log2(p))))


def entropy(frame: FrameBuffer | np.ndarray, region: Region | None = None, bit_depth: int | None = None) -> EntropyReport:
    """Shannon entropy (bits) of the pixel-value histogram.

    One histogram bin per representable value, so the result lies in
    ``[0, bit_depth]``.  A trailing channel axis is handled by averaging the
    per-channel entropies.  ``region`` restricts the evaluation to a
    rectangle of the frame.
    """
    if isinstance(frame, FrameBuffer):
        pixels, depth = np.asarray(frame.pixels), frame.bit_depth
    else:
        pixels = np.asarray(frame)
        if bit_depth is None:
            raise DomainError("bit_depth is required for bare pixel arrays")
        depth = bit_depth
    if bit_depth is not None:
        depth = bit_depth
    if not np.issubdtype(pixels.dtype, np.integer):
        raise DomainError("entropy needs integer pixel values")
    if region is not None:
        region = Region(*region)
        h, w = pixels.shape[:2]
        if region.width <= 0 or region.height <= 0:
            raise DomainError("region is empty")
        if region.x < 0 or region.y < 0 or region.x + region.width > w or region.y + region.height > h:
            raise DomainError("region exceeds the frame bounds")
        pixels = pixels[region.y : region.y + region.height, region.x : region.x + region.width]
    if pixels.size == 0:
        raise DomainError("region is empty")
    bins = 1 << depth
    if pixels.min() < 0 or pixels.max() >= bins:
        raise DomainError("pixel values exceed the bit depth")
    pixels = pixels.astype(np.int64)
    if pixels.ndim == 3:
        bits = float(np.mean([_channel_entropy(pixels[..., c], bins) for c in range(pixels.shape[2])]))
        count = pixels.shape[0] * pixels.shape[1]
    else:
        bits = _channel_entropy(pixels, bins)
        count = pixels.size
    return EntropyReport(bits, bins, int(count), region)


def _box_matrix(n_in: int, n_out: int) -> np.ndarray:
    # row i averages the input interval [i * n_in / n_out, (i + 1) * n_in / n_out)
    edges = np.arange(n_out + 1) * (n_in / n_out)
    lo, hi = edges[:-1, None], edges[1:, None]
    cells = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, cells + 1) - np.maximum(lo, cells), 0.0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


def box_downsample(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    """Area-average a 2-D grid to ``height x width`` (non-integer factors allowed)."""
    px = np.asarray(pixels, dtype=float)
    h, w = px.shape
    if width > w or height > h:
        raise DomainError("box downsampling cannot enlarge a frame")
    return _box_matrix(h, height) @ px @ _box_matrix(w, width).T


def to_common(frames: Sequence[FrameBuffer]) -> list[FrameBuffer]:
    """Reduce frames to the smallest resolution and bit depth among them.

    Resolution by box averaging (rounded half up), bit depth by right shift.
    """
    if not frames:
        return []
    width = min(f.width for f in frames)
    height = min(f.height for f in frames)
    depth = min(f.bit_depth for f in frames)
    out = []
    for f in frames:
        px = np.asarray(f.pixels)
        if (f.width, f.height) != (width, height):
            px = np.floor(box_downsample(px, width, height) + 0.5)
        px = px.astype(np.int64) >> (f.bit_depth - depth)
        out.append(FrameBuffer(width, height, depth, px.astype(np.uint16)))
    return out


def series_entropy(frames: Sequence[FrameBuffer], region: Region | None = None) -> tuple[float, float]:
    """Mean and population std of the entropy over a series of frames."""
    if not frames:
        raise DomainError("empty frame series")
    bits = np.array([entropy(f, region).bits for f in frames])
    return float(bits.mean()), float(bits.std())


def michelson_contrast(i90: float, i5: float) -> float:
    """``(I90 - I5) / (I90 + I5)``."""
    total = i90 + i5
    if total == 0:
        raise DomainError("Michelson contrast is undefined for I90 + I5 = 0")
    return (i90 - i5) / total


def rms_contrast(i5: float, i50: float, i90: float) -> float:
    """Root-mean-square deviation of the outer targets from the 50 % target."""
    return math.sqrt((i90 - i50) ** 2 / 2 + (i5 - i50) ** 2 / 2)


def peak_intensity(trace: TargetTrace) -> tuple[float, float]:
    """Largest binned mean and its bin center; ties go to the nearer bin."""
    b = trace.binned
    if len(b) == 0:
        raise DomainError("peak_intensity of an empty trace")
    k = int(np.argmax(b.mean))  # argmax returns the first maximum
    return float(b.mean[k]), float(b.center_m[k])


def window_mean(trace: TargetTrace, window: tuple[float, float]) -> float:
    """Count-weighted mean of the bins whose centers fall inside ``window``."""
    lo, hi = window
    b = trace.binned
    sel = (b.center_m >= lo) & (b.center_m <= hi)
    if not np.any(sel):
        raise DomainError(f"no samples of rho={trace.rho} inside the window {window}")
    return float(np.average(b.mean[sel], weights=b.count[sel]))


def _pick(traces, rho: float) -> TargetTrace:
    for t in traces:
        if math.isclose(t.rho, rho, abs_tol=1e-9):
            return t
    raise ValidationError(f"no trace for the {rho:g} reflectance target", "traces")


def contrast_window(
    traces: Sequence[TargetTrace] | Mapping[float, TargetTrace],
    window: tuple[float, float] = DEFAULT_CONTRAST_WINDOW_M,
) -> ContrastReport:
    """Average each standard target over a depth window and compute both contrasts."""
    if isinstance(traces, Mapping):
        traces = list(traces.values())
    i5, i50, i90 = (window_mean(_pick(traces, r), window) for r in STANDARD_REFLECTIVITIES)
    return ContrastReport(michelson_contrast(i90, i5), rms_contrast(i5, i50, i90), i5, i50, i90)


def crop(frame: FrameBuffer, region: Region) -> FrameBuffer:
    x, y, w, h = Region(*region)
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > frame.width or y + h > frame.height:
        raise DomainError("region exceeds the frame bounds")
    px = np.asarray(frame.pixels)[y : y + h, x : x + w]
    return FrameBuffer(w, h, frame.bit_depth, px)


def comparable_series(series: Mapping[str, tuple[Sequence[FrameBuffer], Region | None]]) -> dict[str, list[FrameBuffer]]:
    """Crop each series to its region, then bring all frames to a shared size and bit depth.

    Sensors with different resolution and bit depth only have comparable
    entropies after this step; the common format is the smallest crop and
    the lowest bit depth present.
    """
    cropped = {
        name: [f if region is None else crop(f, region) for f in frames] for name, (frames, region) in series.items()
    }
    flat = [f for frames in cropped.values() for f in frames]
    common = iter(to_common(flat))
    return {name: [next(common) for _ in frames] for name, frames in cropped.items()}
