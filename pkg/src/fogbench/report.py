"""Plots and summary tables for a run directory.

Six plot families are produced when their inputs exist:

========================  =====================================
family                    input
========================  =====================================
``intensity_depth``       trace CSVs (always present after simulate)
``fit_overlay``           ``fit_results.csv`` + ``fit_curves.csv``
``peak_visibility``       ``peaks.csv``
``contrast_visibility``   ``contrast.csv``
``entropy_visibility``    ``entropy.csv``
``gate_profile``          gated sensors in the manifest config
========================  =====================================

Every plot is written as ``report/plots/<name>.svg`` together with its data in
``report/data/<name>.csv``; ``report/summary.md`` lists what was produced and
which inputs were missing.  Output depends only on the run directory
contents, so regenerating a report rewrites identical files.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import svg
from .files import atomic_write_text, csv_text, read_csv_dicts, read_manifest, read_trace_csv
from .gated import GatingScheme, gate_profile

FAMILIES = (
    "intensity_depth",
    "fit_overlay",
    "peak_visibility",
    "contrast_visibility",
    "entropy_visibility",
    "gate_profile",
)
DATA_HEADER = ("series", "x", "y", "yerr")
REPORT_DIR = "report"


class _Report:
    def __init__(self, out: Path):
        self.out = out
        self.plots: dict[str, list[str]] = {f: [] for f in FAMILIES}
        self.gaps: list[str] = []
        self.tables: list[str] = []

    def emit(self, family: str, name: str, plot: svg.Plot) -> None:
        rows = []
        for s in plot.series:
            errs = s.yerr if s.yerr is not None else [float("nan")] * len(s.x)
            rows += [(s.label, float(x), float(y), float(e)) for x, y, e in zip(s.x, s.y, errs)]
        atomic_write_text(self.out / "data" / f"{name}.csv", csv_text(DATA_HEADER, rows))
        atomic_write_text(self.out / "plots" / f"{name}.svg", svg.render(plot))
        self.plots[family].append(name)


def _f(row: dict, key: str) -> float:
    return float(row[key])


def _intensity_plots(rep: _Report, run_dir: Path, manifest: dict) -> dict[str, dict]:
    loaded = {}
    for job in manifest["jobs"]:
        traces = {}
        for rel in job["traces"].values():
            traces.update(read_trace_csv(run_dir / rel))
        loaded[job["id"]] = traces
        plot = svg.Plot(f"{job['id']}: V = {job['visibility_m']:g} m", "depth [m]", "intensity")
        for rho in sorted(traces):
            b = traces[rho].binned
            plot.add(f"{rho * 100:g} % target", b.center_m, b.mean, yerr=b.std)
        rep.emit("intensity_depth", f"intensity_depth_{job['id']}", plot)
    return loaded


def _fit_plots(rep: _Report, run_dir: Path, traces_by_job: dict[str, dict]) -> None:
    results, curves = run_dir / "fit_results.csv", run_dir / "fit_curves.csv"
    if not (results.is_file() and curves.is_file()):
        rep.gaps.append("fit_overlay: fit_results.csv / fit_curves.csv missing (run `fogbench fit <run_dir>`)")
        return
    by_source: dict[str, dict[float, list]] = defaultdict(lambda: defaultdict(list))
    for row in read_csv_dicts(curves):
        by_source[row["source"]][_f(row, "target_rho")].append((_f(row, "depth_m"), _f(row, "intensity_fit")))
    lines = ["| source | rho | i0 | I_inf | d0 [m] | beta_a [1/m] | rms | converged |", "|---|---|---|---|---|---|---|---|"]
    for row in read_csv_dicts(results):
        lines.append(
            f"| {row['source']} | {row['target_rho']} | {_f(row, 'i0'):.4f} | {_f(row, 'i_inf'):.4f} | "
            f"{_f(row, 'd0_m'):.3f} | {_f(row, 'beta_a_per_m'):.4f} | {_f(row, 'rms_residual'):.2e} | {row['converged']} |"
        )
    rep.tables.append("## Fitted parameters\n\n" + "\n".join(lines))
    for source in sorted(by_source):
        plot = svg.Plot(f"{source}: fit", "depth [m]", "intensity")
        traces = traces_by_job.get(source, {})
        for rho in sorted(by_source[source]):
            if rho in traces:
                b = traces[rho].binned
                plot.add(f"{rho * 100:g} % measured", b.center_m, b.mean, markers=True)
            d, y = zip(*by_source[source][rho])
            plot.add(f"{rho * 100:g} % fit", d, y, dashed=True)
        rep.emit("fit_overlay", f"fit_overlay_{source}", plot)


def _versus_visibility(rows, key_fields, value, err=None):
    """Group rows into series keyed by ``key_fields``, sorted by visibility."""
    series = defaultdict(list)
    for row in rows:
        key = " ".join(str(row[k]) for k in key_fields if row[k] != "")
        series[key].append((_f(row, "visibility_m"), _f(row, value), _f(row, err) if err else float("nan")))
    return {k: sorted(v) for k, v in sorted(series.items())}


def _peak_plots(rep: _Report, run_dir: Path) -> None:
    path = run_dir / "peaks.csv"
    if not path.is_file():
        rep.gaps.append("peak_visibility: peaks.csv missing (run `fogbench metrics <run_dir>`)")
        return
    rows = [r for r in read_csv_dicts(path) if math.isfinite(_f(r, "visibility_m"))]
    for (scenario, sensor) in sorted({(r["scenario"], r["sensor"]) for r in rows}):
        sub = [r for r in rows if r["scenario"] == scenario and r["sensor"] == sensor]
        for r in sub:
            r["target"] = f"{_f(r, 'target_rho') * 100:g} %"
        plot = svg.Plot(f"{scenario} {sensor}: peak intensity", "visibility [m]", "peak intensity")
        for label, pts in _versus_visibility(sub, ("target", "fog_type"), "peak_intensity").items():
            x, y, _ = zip(*pts)
            plot.add(label, x, y, markers=True)
        rep.emit("peak_visibility", f"peak_visibility_{scenario}_{sensor}", plot)


def _contrast_plots(rep: _Report, run_dir: Path) -> None:
    path = run_dir / "contrast.csv"
    if not path.is_file():
        rep.gaps.append("contrast_visibility: contrast.csv missing (run `fogbench metrics <run_dir>`)")
        return
    rows = [r for r in read_csv_dicts(path) if math.isfinite(_f(r, "visibility_m"))]
    lines = ["| scenario | fog | V [m] | sensor | Michelson | RMS |", "|---|---|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {r['scenario']} | {r['fog_type']} | {_f(r, 'visibility_m'):g} | {r['sensor']} | {_f(r, 'michelson'):.4f} | {_f(r, 'rms'):.4f} |")
    rep.tables.append("## Contrast\n\n" + "\n".join(lines))
    for scenario in sorted({r["scenario"] for r in rows}):
        sub = [r for r in rows if r["scenario"] == scenario]
        plot = svg.Plot(f"{scenario}: contrast", "visibility [m]", "contrast")
        for metric in ("michelson", "rms"):
            for label, pts in _versus_visibility(sub, ("sensor", "fog_type"), metric).items():
                x, y, _ = zip(*pts)
                plot.add(f"{metric} {label}", x, y, markers=True, dashed=metric == "rms")
        rep.emit("contrast_visibility", f"contrast_visibility_{scenario}", plot)


def _entropy_plots(rep: _Report, run_dir: Path) -> None:
    path = run_dir / "entropy.csv"
    if not path.is_file():
        rep.gaps.append("entropy_visibility: entropy.csv missing (run `fogbench metrics <run_dir>`)")
        return
    rows = [r for r in read_csv_dicts(path) if math.isfinite(_f(r, "visibility_m"))]
    lines = ["| scenario | fog | V [m] | sensor | entropy [bit] | std |", "|---|---|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {r['scenario']} | {r['fog_type']} | {_f(r, 'visibility_m'):g} | {r['sensor']} | {_f(r, 'entropy_mean'):.3f} | {_f(r, 'entropy_std'):.3f} |")
    rep.tables.append("## Entropy\n\n" + "\n".join(lines))
    for scenario in sorted({r["scenario"] for r in rows}):
        sub = [r for r in rows if r["scenario"] == scenario]
        plot = svg.Plot(f"{scenario}: entropy", "visibility [m]", "entropy [bit]")
        for label, pts in _versus_visibility(sub, ("sensor", "fog_type"), "entropy_mean", "entropy_std").items():
            x, y, e = zip(*pts)
            plot.add(label, x, y, markers=True, yerr=e)
        rep.emit("entropy_visibility", f"entropy_visibility_{scenario}", plot)


def _gate_plots(rep: _Report, manifest: dict) -> None:
    gated = [s for s in manifest["config"]["sensors"] if s.get("gating")]
    if not gated:
        rep.gaps.append("gate_profile: no gated sensor in the run")
        return
    for s in gated:
        scheme = GatingScheme(**s["gating"])
        prof = gate_profile(scheme, samples=256)
        plot = svg.Plot(
            f"{s['name']}: gate profile ({scheme.t_laser_ns:g}/{scheme.t_delay_ns:g}/{scheme.t_gate_ns:g} ns)",
            "depth [m]", "gain",
        )
        plot.add("gain", np.asarray(prof.distance_m), np.asarray(prof.gain))
        rep.emit("gate_profile", f"gate_profile_{s['name']}", plot)


def build_report(run_dir: Path | str, out: Path | str | None = None) -> dict[str, list[str]]:
    """Write plots, plot data and ``summary.md``; return plot names per family."""
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    rep = _Report(Path(out) if out is not None else run_dir / REPORT_DIR)
    traces = _intensity_plots(rep, run_dir, manifest)
    _fit_plots(rep, run_dir, traces)
    _peak_plots(rep, run_dir)
    _contrast_plots(rep, run_dir)
    _entropy_plots(rep, run_dir)
    _gate_plots(rep, manifest)

    lines = ["# fogbench report", "", f"Jobs: {len(manifest['jobs'])}", "", "## Plots", ""]
    for family in FAMILIES:
        names = rep.plots[family]
        lines.append(f"- {family}: {len(names)} plot(s)" if names else f"- {family}: not produced")
    lines += ["", "## Gaps", ""]
    lines += [f"- {g}" for g in rep.gaps] or ["- none"]
    for table in rep.tables:
        lines += ["", table]
    atomic_write_text(rep.out / "summary.md", "\n".join(lines) + "\n")
    return rep.plots
