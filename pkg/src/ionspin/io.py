"""CSV and report files. Times are written in microseconds, frequencies in kHz."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

TRACE_HEADER = ("time_us", "p_down", "shots", "successes")
SPECTRUM_HEADER = ("frequency_khz", "magnitude")


class FileFormatError(ValueError):
    """Malformed input file; ``row`` is the 1-based line number when known."""

    def __init__(self, path, message: str, row: Optional[int] = None):
        self.path = str(path)
        self.row = row
        where = f"{self.path}: row {row}" if row is not None else self.path
        super().__init__(f"{where}: {message}")


def fmt(x: float) -> str:
    """Shortest round-tripping text for a float; integers stay integral."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    return atomic_write_text(path, csv_text(header, rows))


@dataclass
class TraceFile:
    times: np.ndarray          # seconds
    shots: np.ndarray
    successes: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.shots = np.asarray(self.shots, dtype=int)
        self.successes = np.asarray(self.successes, dtype=int)
        if not (self.times.shape == self.shots.shape == self.successes.shape):
            raise ValueError("times, shots and successes must have equal length")
        if np.any(self.successes > self.shots) or np.any(self.successes < 0) or np.any(self.shots <= 0):
            raise ValueError("need 0 <= successes <= shots and shots > 0")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time_us must be strictly increasing")

    @property
    def p_down(self) -> np.ndarray:
        return self.successes / self.shots

    def to_text(self) -> str:
        rows = ((fmt(round(t * 1e6, 9)), fmt(p), int(n), int(k))
                for t, p, n, k in zip(self.times, self.p_down, self.shots, self.successes))
        return csv_text(TRACE_HEADER, rows)

    def write(self, path) -> Path:
        return atomic_write_text(path, self.to_text())


def parse_trace_text(text: str, path="<trace>") -> TraceFile:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FileFormatError(path, "empty file", 1)
    if "\r" in text:
        raise FileFormatError(path, "CR line endings are not allowed; use LF")
    header = lines[0].lstrip("﻿").split(",")
    if tuple(h.strip() for h in header) != TRACE_HEADER:
        raise FileFormatError(path, f"header must be {','.join(TRACE_HEADER)}", 1)
    times, shots, succ = [], [], []
    for row, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 4:
            raise FileFormatError(path, f"expected 4 fields, found {len(cells)}", row)
        try:
            t, p = float(cells[0]), float(cells[1])
            n, k = int(cells[2]), int(cells[3])
        except ValueError:
            raise FileFormatError(path, f"unparseable value in {line!r}", row) from None
        if not (math.isfinite(t) and math.isfinite(p)):
            raise FileFormatError(path, "non-finite value", row)
        if n <= 0 or k < 0 or k > n:
            raise FileFormatError(path, f"need 0 <= successes <= shots and shots > 0 (got {k}/{n})", row)
        if abs(p - k / n) > 1e-6:
            raise FileFormatError(path, f"p_down {p} disagrees with successes/shots {k / n:.6g}", row)
        if times and t <= times[-1]:
            raise FileFormatError(path, "time_us must be strictly increasing", row)
        times.append(t)
        shots.append(n)
        succ.append(k)
    if not times:
        raise FileFormatError(path, "no data rows", 2)
    return TraceFile(np.array(times) * 1e-6, np.array(shots), np.array(succ))


def read_trace(path) -> TraceFile:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FileFormatError(path, exc.strerror or "cannot read") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FileFormatError(path, f"not UTF-8 ({exc.reason})") from None
    return parse_trace_text(text, path)


def read_csv_table(path) -> tuple[list[str], np.ndarray]:
    """Header and float matrix of a numeric CSV (curve grammar)."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FileFormatError(path, "empty file", 1) from None
    data = []
    for row, cells in enumerate(reader, start=2):
        if len(cells) != len(header):
            raise FileFormatError(path, f"expected {len(header)} fields, found {len(cells)}", row)
        try:
            data.append([float(c) for c in cells])
        except ValueError:
            raise FileFormatError(path, f"unparseable value in {cells!r}", row) from None
    return header, np.array(data, dtype=float).reshape(-1, len(header))


def write_spectrum(path, angular_frequencies, magnitude) -> Path:
    khz = np.asarray(angular_frequencies) / (2 * math.pi) / 1e3
    return write_csv(path, SPECTRUM_HEADER, zip(khz, np.asarray(magnitude, dtype=float)))


def read_report(path) -> dict[str, str]:
    """``key: value`` lines of a text report (the table after them is skipped)."""
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            break
        key, _, val = line.partition(":")
        out[key.strip()] = val.strip()
    return out
