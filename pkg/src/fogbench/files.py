"""Trace CSV, portable graymap and manifest I/O.

Trace CSVs are long format with the header
``depth_m,intensity_mean,intensity_std,target_rho``; numbers are written
with 9 significant digits, so a write-read-write cycle is byte-stable.
The wide layout with per-target column groups (``x_5, mean_5, std_5,
x_50, ...``) is accepted on input and converted.

Frames are binary PGM (P5) with ``maxval = 2**bit_depth - 1``; for bit depths
above 8 every sample takes two bytes, most significant byte first.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ValidationError
from .scene import FrameBuffer, TargetTrace

TRACE_HEADER = ("depth_m", "intensity_mean", "intensity_std", "target_rho")
_WIDE_COLUMN = re.compile(r"^(x|mean|std)_(\d+(?:\.\d+)?)$")


def fmt(value: float) -> str:
    """Decimal text with 9 significant digits."""
    return f"{float(value):.9g}"


def atomic_write_bytes(path: Path | str, data: bytes) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path | str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def csv_text(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# traces


def trace_rows(traces: Iterable[TargetTrace]):
    for t in traces:
        b = t.binned
        for c, m, s in zip(b.center_m, b.mean, b.std):
            yield (float(c), float(m), float(s), float(t.rho))


def write_trace_csv(path: Path | str, traces: Iterable[TargetTrace]) -> None:
    atomic_write_text(path, csv_text(TRACE_HEADER, trace_rows(traces)))


def _parse_float(text: str, where: str, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"column {column!r} is not a number: {text!r}", where) from None
    if not np.isfinite(value):
        raise ValidationError(f"column {column!r} is not finite", where)
    return value


def _check_sample(depth, mean, std, rho, where):
    if not depth > 0:
        raise ValidationError("depth_m must be positive", where)
    if not 0 <= mean <= 1:
        raise ValidationError("intensity_mean must lie in [0, 1]", where)
    if not 0 <= std <= 1:
        raise ValidationError("intensity_std must lie in [0, 1]", where)
    if not 0 <= rho <= 1:
        raise ValidationError("target_rho must lie in [0, 1]", where)


def _group(rows: list[tuple[float, float, float, float]]) -> dict[float, TargetTrace]:
    groups: dict[float, list] = {}
    for depth, mean, std, rho in rows:
        groups.setdefault(rho, []).append((depth, mean, std))
    out = {}
    for rho in sorted(groups):
        arr = np.array(groups[rho], dtype=float)
        out[rho] = TargetTrace.from_bins(rho, arr[:, 0], arr[:, 1], arr[:, 2])
    return out


def read_trace_csv(path: Path | str) -> dict[float, TargetTrace]:
    """Read a long- or wide-format trace file, one trace per reflectivity."""
    path = Path(path)
    return parse_trace_csv(path.read_text(encoding="utf-8"), source=str(path))


def parse_trace_csv(text: str, source: str = "<string>") -> dict[float, TargetTrace]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValidationError("empty file, header line missing", f"{source}:1") from None
    if tuple(header) == TRACE_HEADER:
        rows = _read_long(reader, source)
    elif header and all(_WIDE_COLUMN.match(h) for h in header):
        rows = _read_wide(header, reader, source)
    else:
        unknown = [h for h in header if h not in TRACE_HEADER]
        detail = f"unknown column(s) {unknown}" if unknown else "columns out of order or missing"
        raise ValidationError(f"{detail}; expected header {','.join(TRACE_HEADER)}", f"{source}:1")
    if not rows:
        raise ValidationError("no data rows after the header", source)
    return _group(rows)


def _read_long(reader, source):
    rows = []
    for line_no, record in enumerate(reader, start=2):
        if not record or all(not f.strip() for f in record):
            continue
        where = f"{source}:{line_no}"
        if len(record) != len(TRACE_HEADER):
            raise ValidationError(f"expected {len(TRACE_HEADER)} fields, got {len(record)}", where)
        values = [_parse_float(f.strip(), where, c) for f, c in zip(record, TRACE_HEADER)]
        _check_sample(*values, where)
        rows.append(tuple(values))
    return rows


def _read_wide(header, reader, source):
    groups: dict[str, dict[str, int]] = {}
    for i, h in enumerate(header):
        kind, pct = _WIDE_COLUMN.match(h).groups()
        groups.setdefault(pct, {})[kind] = i
    for pct, cols in groups.items():
        if not {"x", "mean"} <= set(cols):
            raise ValidationError(f"target {pct} % needs both x_{pct} and mean_{pct}", f"{source}:1")
    rows = []
    for line_no, record in enumerate(reader, start=2):
        if not record or all(not f.strip() for f in record):
            continue
        where = f"{source}:{line_no}"
        if len(record) != len(header):
            raise ValidationError(f"expected {len(header)} fields, got {len(record)}", where)
        # each target keeps its own depth column; blank cells mean no observation
        for pct, cols in groups.items():
            x_text, m_text = record[cols["x"]].strip(), record[cols["mean"]].strip()
            if not x_text and not m_text:
                continue
            depth = _parse_float(x_text, where, f"x_{pct}")
            mean = _parse_float(m_text, where, f"mean_{pct}")
            std = _parse_float(record[cols["std"]].strip(), where, f"std_{pct}") if "std" in cols else 0.0
            rho = float(pct) / 100.0
            _check_sample(depth, mean, std, rho, where)
            rows.append((depth, mean, std, rho))
    return rows


# --------------------------------------------------------------------------
# frames


def pgm_bytes(frame: FrameBuffer) -> bytes:
    maxval = frame.max_value
    header = f"P5\n{frame.width} {frame.height}\n{maxval}\n".encode("ascii")
    px = np.asarray(frame.pixels)
    data = px.astype(">u2" if maxval > 255 else "u1").tobytes()
    return header + data


def write_pgm(path: Path | str, frame: FrameBuffer) -> None:
    atomic_write_bytes(path, pgm_bytes(frame))


def read_pgm(path: Path | str) -> FrameBuffer:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValidationError("not a binary graymap (P5)", str(path))
    width, height, maxval = (int(t) for t in tokens[1:])
    pos += 1  # single whitespace byte before the raster
    dtype = ">u2" if maxval > 255 else "u1"
    px = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos).reshape(height, width)
    bit_depth = int(maxval).bit_length()
    if (1 << bit_depth) - 1 != maxval:
        raise ValidationError(f"maxval {maxval} is not 2**n - 1", str(path))
    return FrameBuffer(width, height, bit_depth, px.astype(np.uint16))


# --------------------------------------------------------------------------
# manifest


MANIFEST_NAME = "manifest.json"


def write_json(path: Path | str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_manifest(run_dir: Path | str) -> dict:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {run_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


def read_csv_dicts(path: Path | str) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
