"""``fogbench`` command line.

Exit codes: 0 success, 1 invalid input or configuration, 2 file-system
error, 3 numerical failure (non-converged fit under ``--strict``).

Output directory precedence: ``--out`` > config ``out`` > ``$FOGBENCH_OUT`` >
default (``fogbench_run`` for simulate, the run directory or the working
directory for the other subcommands).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from . import harness
from .config import U64_MAX, ExperimentConfig, load_config
from .errors import DomainError, NumericalError, ValidationError
from .files import MANIFEST_NAME, read_manifest, read_trace_csv
from .metrics import DEFAULT_CONTRAST_WINDOW_M
from .report import build_report

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3
ENV_OUT = "FOGBENCH_OUT"
DEFAULT_RUN_DIR = "fogbench_run"


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors, not I/O errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config")
    common.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--bin-width", type=_positive, dest="bin_width", help="depth bin width [m]")
    common.add_argument("--step", type=_positive, help="target sweep step [m]")
    common.add_argument("--strict", action="store_true", help="non-converged fits exit with code 3")

    parser = _Parser(prog="fogbench", description="Fog-chamber sensor benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate the experiment grid")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker threads")

    p = sub.add_parser("fit", parents=[common], help="fit the scattering model to traces")
    p.add_argument("input", type=Path, help="trace CSV or run directory")
    p.add_argument("--visibility", type=_positive, help="visibility [m] for a trace CSV")

    p = sub.add_parser("metrics", parents=[common], help="entropy, contrast and peak tables")
    p.add_argument("inputs", type=Path, nargs="+", help="run directory, trace CSVs or PGM frames")
    p.add_argument("--window", type=float, nargs=2, metavar=("START", "END"), help="contrast window [m]")

    p = sub.add_parser("report", parents=[common], help="plots and summary for a run")
    p.add_argument("run_dir", type=Path)
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.bin_width is not None:
        overrides["bin_width_m"] = args.bin_width
    if args.step is not None:
        overrides["step_m"] = args.step
    return dataclasses.replace(cfg, **overrides).validate()


def resolve_out(args, cfg: ExperimentConfig | None, default: Path) -> Path:
    if args.out is not None:
        return args.out
    if cfg is not None and cfg.out:
        return Path(cfg.out)
    if os.environ.get(ENV_OUT):
        return Path(os.environ[ENV_OUT])
    return default


def _is_run_dir(path: Path) -> bool:
    return path.is_dir() and (path / MANIFEST_NAME).is_file()


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    out = resolve_out(args, cfg, Path(DEFAULT_RUN_DIR))
    if args.jobs < 1:
        raise ValidationError("must be at least 1", "--jobs")
    manifest = harness.simulate(cfg, out, jobs=args.jobs)
    n_traces = sum(len(j["traces"]) for j in manifest["jobs"])
    print(f"{len(manifest['jobs'])} jobs, {n_traces} trace files -> {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = load_config(args.config) if args.config else None
    if _is_run_dir(args.input):
        manifest = read_manifest(args.input)
        sources = list(harness.run_sources(args.input, manifest))
        out = resolve_out(args, cfg, args.input)
    elif args.input.is_dir():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {args.input}")
    else:
        if args.visibility is None:
            raise ValidationError("required when fitting a trace CSV", "--visibility")
        sources = [(args.input.name, read_trace_csv(args.input), args.visibility)]
        out = resolve_out(args, cfg, Path.cwd())
    records = harness.fit_traces(sources)
    out.mkdir(parents=True, exist_ok=True)
    try:
        harness.write_fit_outputs(records, out, strict=args.strict)
    finally:
        for rec in records:
            r = rec.result
            print(
                f"{rec.source} rho={rec.trace.rho:g}: i0={r.i0:.6g} i_inf={r.i_inf:.6g} d0={r.d0_m:.6g} m "
                f"beta_a={r.beta_a_per_m:.6g}/m rms={r.rms_residual:.3g} converged={r.converged}"
            )
    return EXIT_OK


def cmd_metrics(args) -> int:
    cfg = load_config(args.config) if args.config else None
    window = tuple(args.window) if args.window else None
    if window is not None and not window[0] < window[1]:
        raise ValidationError("window start must be below its end", "--window")
    if len(args.inputs) == 1 and _is_run_dir(args.inputs[0]):
        run_dir = args.inputs[0]
        harness.metrics_for_run(run_dir, resolve_out(args, cfg, run_dir), window)
        return EXIT_OK
    csvs = [p for p in args.inputs if p.suffix.lower() == ".csv"]
    pgms = [p for p in args.inputs if p.suffix.lower() == ".pgm"]
    other = [p for p in args.inputs if p not in csvs and p not in pgms]
    if other:
        raise ValidationError(f"expected a run directory, .csv or .pgm files, got {other[0]}", "inputs")
    for p in args.inputs:
        if not p.is_file():
            raise FileNotFoundError(f"no such file: {p}")
    window = window or (cfg.contrast_window_m if cfg else DEFAULT_CONTRAST_WINDOW_M)
    contrast, peaks = harness.trace_metric_rows(harness.file_trace_groups(csvs), window)
    entropy = [harness.entropy_for_frames(pgms)] if pgms else None
    out = resolve_out(args, cfg, Path.cwd())
    out.mkdir(parents=True, exist_ok=True)
    harness.write_metrics(out, entropy, contrast, peaks)
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = load_config(args.config) if args.config else None
    out = args.out if args.out is not None else None
    if out is None and cfg is not None and cfg.out:
        out = Path(cfg.out)
    plots = build_report(args.run_dir, out)
    produced = [f for f, names in plots.items() if names]
    print(f"report: {len(produced)} of {len(plots)} plot families -> {out or args.run_dir / 'report'}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "metrics": cmd_metrics, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, DomainError) as exc:
        print(f"fogbench: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"fogbench: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"fogbench: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
