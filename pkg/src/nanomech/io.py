"""Plot-ready CSV files with ``#`` metadata lines.

Numbers are written with ``%.17g`` so a file read back reproduces the
floats exactly, and nothing time-dependent is written into data files.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .spectra import SpectrumSeries


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, Mapping):
        return json.dumps(value, sort_keys=True, default=str)
    return str(value)


def write_csv(path, columns: Sequence[str], rows, meta: Mapping | None = None) -> Path:
    path = Path(path)
    rows = np.atleast_2d(np.asarray(rows, dtype=float)) if len(rows) else np.empty((0, len(columns)))
    lines = []
    for key in sorted(meta or {}):
        lines.append(f"# {key} = {_fmt(meta[key])}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join("%.17g" % v for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Return (meta, columns, data) from a file written by :func:`write_csv`."""
    meta, columns, data = {}, None, []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif columns is None:
            columns = [c.strip() for c in line.split(",")]
        else:
            data.append([float(v) for v in line.split(",")])
    if columns is None:
        raise ValueError(f"{path}: no header line")
    return meta, columns, np.array(data, dtype=float).reshape(-1, len(columns))


def read_spectrum(path) -> SpectrumSeries:
    """Load any two-column-or-wider spectrum CSV (first column Hz, second PSD)."""
    meta, columns, data = read_csv(path)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: need at least two columns")
    return SpectrumSeries(data[:, 0], data[:, 1], units=meta.get("units", columns[1]), metadata=meta)


def write_spectrum(path, spectrum: SpectrumSeries, meta: Mapping | None = None):
    m = dict(spectrum.metadata)
    m.update(meta or {})
    m["units"] = spectrum.units
    return write_csv(path, ("nu_hz", "psd"), np.column_stack([spectrum.frequencies, spectrum.psd]), m)


def write_report(path, items: Mapping) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in items.items()))
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def body_bytes(path) -> bytes:
    """File contents without ``#`` metadata lines."""
    return b"".join(
        line for line in Path(path).read_bytes().splitlines(keepends=True) if not line.startswith(b"#")
    )


def inventory(paths: Iterable[Path]) -> dict:
    return {Path(p).name: sha256(p) for p in sorted(paths)}
