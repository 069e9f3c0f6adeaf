"""Experiment orchestration behind the command-line subcommands.

A run directory looks like::

    traces/<job>_rho05.csv        one file per (scenario, fog, sensor, target)
    frames/<job>/frame_000.pgm    rendered frame series
    fit_results.csv, fit_curves.csv
    entropy.csv, contrast.csv, peaks.csv
    manifest.json                 written last

Job ids are ``<scenario>_<fogtype>_V<lo>-<hi>_<sensor>``.  Job ``j`` (in grid
order: scenario, fog type, visibility, sensor) draws all of its noise from
the seed sequence ``[seed, j]``, so jobs can run in any order or in parallel.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .atmosphere import FogCondition, beta_from_visibility
from .config import ExperimentConfig, FogSetting, NamedScenario
from .errors import NumericalError, ValidationError
from .files import (
    MANIFEST_NAME,
    atomic_write_text,
    csv_text,
    fmt,
    read_manifest,
    read_pgm,
    read_trace_csv,
    write_json,
    write_pgm,
    write_trace_csv,
)
from .fitting import MIN_BINS, FitResult, fit_trace
from .gated import CHAMBER_SCHEME
from .metrics import comparable_series, contrast_window, peak_intensity, series_entropy
from .scene import SensorKind, SensorModel, TargetTrace, illuminated_region, render_series, simulate_sweep

FIT_HEADER = (
    "source", "target_rho", "visibility_m", "beta_per_m", "i0", "i_inf", "d0_m", "beta_a_per_m",
    "rms_residual", "iterations", "converged",
)
CURVE_HEADER = ("source", "target_rho", "depth_m", "intensity_fit")
ENTROPY_HEADER = (
    "scenario", "fog_type", "visibility_range_m", "visibility_m", "sensor", "frames",
    "entropy_mean", "entropy_std", "width", "height", "bit_depth",
)
CONTRAST_HEADER = (
    "source", "scenario", "fog_type", "visibility_m", "sensor", "window_start_m", "window_end_m",
    "i5", "i50", "i90", "michelson", "rms",
)
PEAK_HEADER = ("source", "scenario", "fog_type", "visibility_m", "sensor", "target_rho", "peak_intensity", "peak_depth_m")
CURVE_STEP_M = 0.1


def rho_label(rho: float) -> str:
    """File-name tag of a reflectivity: 0.05 -> 'rho05', 0.5 -> 'rho50'."""
    pct = f"{rho * 100:.6g}".replace(".", "p")
    return "rho" + (pct if rho >= 0.1 else "0" + pct)


@dataclass(frozen=True)
class Job:
    index: int
    scenario: NamedScenario
    fog: FogSetting
    sensor: SensorModel

    @property
    def id(self) -> str:
        return f"{self.scenario.name}_{self.fog.label}_{self.sensor.name}"


def plan_jobs(cfg: ExperimentConfig) -> list[Job]:
    jobs = []
    for scenario in cfg.scenarios:
        for fog in cfg.fog:
            for sensor in cfg.sensors:
                jobs.append(Job(len(jobs), scenario, fog, sensor))
    return jobs


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _roi_scheme(cfg: ExperimentConfig):
    # all sensors share the region lit by both headlights and the (first) laser
    for s in cfg.sensors:
        if s.kind is SensorKind.GATED:
            return s.gating
    return CHAMBER_SCHEME


def _run_job(job: Job, cfg: ExperimentConfig, out: Path) -> dict:
    fog = FogCondition(job.fog.fog_type, job.fog.visibility_m)
    seed = [cfg.seed, job.index]
    traces = simulate_sweep(
        job.scenario.scenario, fog, job.sensor, cfg.targets, cfg.step_m,
        params=cfg.simulation, bin_width_m=cfg.bin_width_m, seed=seed,
    )
    trace_files = {}
    for trace in traces:
        rel = f"traces/{job.id}_{rho_label(trace.rho)}.csv"
        write_trace_csv(out / rel, [trace])
        trace_files[fmt(trace.rho)] = rel
    frame_files = []
    roi = None
    if cfg.frames:
        sensor = job.sensor.scaled(cfg.render_scale)
        frames = render_series(job.scenario.scenario, fog, sensor, cfg.layout, seed, cfg.frames, cfg.simulation)
        for k, frame in enumerate(frames):
            rel = f"frames/{job.id}/frame_{k:03d}.pgm"
            write_pgm(out / rel, frame)
            frame_files.append(rel)
        roi = list(illuminated_region(job.scenario.scenario, sensor, _roi_scheme(cfg), cfg.layout, cfg.simulation))
    return {
        "id": job.id,
        "index": job.index,
        "scenario": job.scenario.name,
        "fog_type": job.fog.fog_type.value,
        "visibility_range_m": list(job.fog.visibility_range_m),
        "visibility_m": job.fog.visibility_m,
        "beta_per_m": fog.beta_per_m,
        "sensor": job.sensor.name,
        "sensor_kind": job.sensor.kind.value,
        "seed": seed,
        "traces": trace_files,
        "frames": frame_files,
        "roi": roi,
    }


def simulate(cfg: ExperimentConfig, out: Path | str, jobs: int = 1) -> dict:
    """Run the whole grid into ``out`` and return the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    plan = plan_jobs(cfg)
    ids = [j.id for j in plan]
    if len(set(ids)) != len(ids):
        raise ValidationError("job ids collide; use distinct scenario and sensor names", "scenarios")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(lambda j: _run_job(j, cfg, out), plan))
    else:
        records = [_run_job(j, cfg, out) for j in plan]
    outputs = {}
    for rec in records:
        for rel in [*rec["traces"].values(), *rec["frames"]]:
            outputs[rel] = _sha256(out / rel)
    manifest = {
        "fogbench_version": __version__,
        "config": cfg.to_dict(),
        "jobs": records,
        "outputs": outputs,
    }
    write_json(out / MANIFEST_NAME, manifest)
    return manifest


# --------------------------------------------------------------------------
# fit


@dataclass(frozen=True)
class FitRecord:
    source: str
    trace: TargetTrace
    visibility_m: float
    result: FitResult


def fit_traces(sources: Iterable[tuple[str, dict[float, TargetTrace], float]]) -> list[FitRecord]:
    """Fit every reflectivity group of every source at its visibility."""
    records = []
    for source, traces, visibility in sources:
        beta = float(beta_from_visibility(visibility))
        for rho in sorted(traces):
            trace = traces[rho]
            if len(trace.binned) < MIN_BINS:
                raise ValidationError(f"rho={rho:g} has {len(trace.binned)} bins, need {MIN_BINS}", source)
            records.append(FitRecord(source, trace, visibility, fit_trace(trace, beta)))
    return records


def run_sources(run_dir: Path, manifest: dict, sensor_kind: str | None = SensorKind.STANDARD.value):
    """(source, traces, visibility) per job of a run, optionally for one sensor kind."""
    for job in manifest["jobs"]:
        if sensor_kind is not None and job["sensor_kind"] != sensor_kind:
            continue
        traces = {}
        for rel in job["traces"].values():
            traces.update(read_trace_csv(run_dir / rel))
        yield job["id"], traces, float(job["visibility_m"])


def write_fit_outputs(records: list[FitRecord], out: Path, strict: bool = False) -> None:
    rows, curves = [], []
    for rec in records:
        r = rec.result
        rows.append((
            rec.source, float(rec.trace.rho), float(rec.visibility_m), r.beta_per_m, r.i0, r.i_inf, r.d0_m,
            r.beta_a_per_m, r.rms_residual, r.iterations, str(r.converged).lower(),
        ))
        centers = rec.trace.binned.center_m
        lo, hi = float(centers.min()), float(centers.max())
        n = int(math.floor((hi - lo) / CURVE_STEP_M + 1e-9)) + 1
        depths = np.round(lo + CURVE_STEP_M * np.arange(n), 9)
        for d, y in zip(depths, r.evaluate(depths)):
            curves.append((rec.source, float(rec.trace.rho), float(d), float(y)))
    atomic_write_text(out / "fit_results.csv", csv_text(FIT_HEADER, rows))
    atomic_write_text(out / "fit_curves.csv", csv_text(CURVE_HEADER, curves))
    failed = [f"{rec.source} rho={rec.trace.rho:g}" for rec in records if not rec.result.converged]
    if strict and failed:
        raise NumericalError("fit did not converge: " + ", ".join(failed))


# --------------------------------------------------------------------------
# metrics


def entropy_rows(run_dir: Path, manifest: dict) -> list[tuple]:
    """Series entropy per job, compared at a common crop, resolution and bit depth.

    Jobs that share scenario and fog are normalized together, so the
    sensors of one condition are directly comparable.
    """
    groups: dict[tuple, list[dict]] = {}
    for job in manifest["jobs"]:
        if job["frames"]:
            groups.setdefault((job["scenario"], job["fog_type"], tuple(job["visibility_range_m"])), []).append(job)
    rows = []
    for (scenario, fog_type, vrange), group in groups.items():
        series = {
            job["id"]: ([read_pgm(run_dir / rel) for rel in job["frames"]], job["roi"]) for job in group
        }
        common = comparable_series(series)
        for job in group:
            frames = common[job["id"]]
            mean, std = series_entropy(frames)
            f0 = frames[0]
            rows.append((
                scenario, fog_type, f"{vrange[0]:g}-{vrange[1]:g}", float(job["visibility_m"]), job["sensor"],
                len(frames), mean, std, f0.width, f0.height, f0.bit_depth,
            ))
    return rows


def trace_metric_rows(
    labeled: Iterable[tuple[dict, dict[float, TargetTrace]]], window: tuple[float, float]
) -> tuple[list[tuple], list[tuple]]:
    """Contrast and peak rows for labelled trace groups.

    Each label holds ``source, scenario, fog_type, visibility_m, sensor``.
    """
    contrast, peaks = [], []
    for label, traces in labeled:
        key = (label["source"], label["scenario"], label["fog_type"], label["visibility_m"], label["sensor"])
        c = contrast_window(traces, window)
        contrast.append((*key, float(window[0]), float(window[1]), c.i5, c.i50, c.i90, c.michelson, c.rms))
        for rho in sorted(traces):
            value, depth = peak_intensity(traces[rho])
            peaks.append((*key, float(rho), value, depth))
    return contrast, peaks


def run_trace_groups(run_dir: Path, manifest: dict):
    for job in manifest["jobs"]:
        traces = {}
        for rel in job["traces"].values():
            traces.update(read_trace_csv(run_dir / rel))
        label = {
            "source": job["id"], "scenario": job["scenario"], "fog_type": job["fog_type"],
            "visibility_m": float(job["visibility_m"]), "sensor": job["sensor"],
        }
        yield label, traces


def file_trace_groups(paths: Iterable[Path]):
    for path in paths:
        label = {"source": path.name, "scenario": "", "fog_type": "", "visibility_m": float("nan"), "sensor": ""}
        yield label, read_trace_csv(path)


def write_metrics(out: Path, entropy: list[tuple] | None, contrast: list[tuple], peaks: list[tuple]) -> None:
    if entropy is not None:
        atomic_write_text(out / "entropy.csv", csv_text(ENTROPY_HEADER, entropy))
    atomic_write_text(out / "contrast.csv", csv_text(CONTRAST_HEADER, contrast))
    atomic_write_text(out / "peaks.csv", csv_text(PEAK_HEADER, peaks))


def metrics_for_run(run_dir: Path, out: Path | None = None, window=None) -> None:
    manifest = read_manifest(run_dir)
    window = tuple(window or manifest["config"]["contrast_window_m"])
    contrast, peaks = trace_metric_rows(run_trace_groups(run_dir, manifest), window)
    write_metrics(out or run_dir, entropy_rows(run_dir, manifest), contrast, peaks)


def entropy_for_frames(paths: list[Path]) -> tuple:
    frames = [read_pgm(p) for p in paths]
    mean, std = series_entropy(frames)
    f0 = frames[0]
    return ("", "", "", float("nan"), "", len(frames), mean, std, f0.width, f0.height, f0.bit_depth)
