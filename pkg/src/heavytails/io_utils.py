"""Data file formats and run manifests.

CSV is the canonical interchange format; the binary format (magic
``HTDT``) stores little-endian float64 with an explicit shape so field
ensembles round-trip exactly.  Manifests are flat key=value text.
"""

from __future__ import annotations

import csv
import struct
import time
from pathlib import Path

import numpy as np

from .errors import ParameterError

_MAGIC = b"HTDT"
_VERSION = 1


def write_matrix_csv(path, arr: np.ndarray) -> None:
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(arr.shape[1])])
        for row in arr:
            writer.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or (header and arr.size and arr.shape[1] != len(header)):
        raise ParameterError(f"malformed CSV data file {path}")
    return arr


def write_binary(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.astype("<f8").tobytes())


def read_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ParameterError(f"{path} is not a binary data file")
        version, ndim = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ParameterError(f"unsupported data file version {version}")
        shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        n = int(np.prod(shape))
        buf = fh.read(8 * n)
        if len(buf) != 8 * n:
            raise ParameterError(f"truncated data file {path}")
        return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()


def save_array(path, arr: np.ndarray) -> None:
    """Dispatch on extension: .csv is canonical, anything else is binary."""
    if str(path).endswith(".csv"):
        write_matrix_csv(path, arr)
    else:
        write_binary(path, arr)


def load_array(path) -> np.ndarray:
    if str(path).endswith(".csv"):
        return read_matrix_csv(path)
    return read_binary(path)


def write_manifest(path, entries: dict) -> None:
    with open(path, "w") as fh:
        fh.write(f"# written {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        for key, val in entries.items():
            fh.write(f"{key}={val}\n")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key] = val
    return out


def read_kv_config(path) -> dict:
    """Flat key=value config file; '#' starts a comment."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"malformed config line: {raw!r}")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def write_svg_lines(path, edges: np.ndarray, curves: dict, width=640, height=400) -> None:
    """Minimal SVG polyline plot of histogram curves on shared edges."""
    centers = 0.5 * (edges[:-1] + edges[1:])
    top = max(float(np.max(c)) for c in curves.values()) or 1.0
    lo, hi = float(centers[0]), float(centers[-1])
    span = hi - lo or 1.0
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    margin = 40
    for k, (name, vals) in enumerate(curves.items()):
        pts = []
        for x, y in zip(centers, vals):
            px = margin + (x - lo) / span * (width - 2 * margin)
            py = height - margin - (y / top) * (height - 2 * margin)
            pts.append(f"{px:.1f},{py:.1f}")
        color = colors[k % len(colors)]
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>'
        )
        parts.append(
            f'<text x="{margin}" y="{20 + 14 * k}" fill="{color}" font-size="12">{name}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))
