"""Binary snapshot container, CSV series and JSON summaries.

Snapshot layout (little endian)::

    magic  8s   b"HROMSNP1"
    version u32
    N      u64  rows
    count  u64  columns
    dt     f64
    stride u64
    payload count * N f64, column-major

Every container has a JSON sidecar ``<file>.json`` carrying the config hash.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HROMSNP1"
VERSION = 1
_HEADER = struct.Struct("<8sIQQdQ")


class FormatError(ValueError):
    pass


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_snapshots(path, data, dt: float = 0.0, stride: int = 1, meta: dict | None = None) -> Path:
    path = Path(path)
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("snapshot data must be 2D")
    N, count = data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, N, count, float(dt), int(stride)))
        # column-major payload == row-major bytes of the transpose
        np.ascontiguousarray(data.T, dtype="<f8").tofile(fh)
    write_json(sidecar_path(path), meta or {})
    return path


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, N, count, dt, stride = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return {"N": N, "count": count, "dt": dt, "stride": stride}


def read_snapshots(path):
    """Return ``(data, header, meta)``; ``data`` is an N x count Fortran-ordered array."""
    path = Path(path)
    hdr = read_header(path)
    N, count = hdr["N"], hdr["count"]
    expected = _HEADER.size + 8 * N * count
    size = path.stat().st_size
    if size != expected:
        raise FormatError(f"{path}: payload is {size - _HEADER.size} bytes, header implies {8 * N * count}")
    flat = np.fromfile(path, dtype="<f8", count=N * count, offset=_HEADER.size)
    data = flat.reshape(count, N).T.astype(float, copy=False)
    side = sidecar_path(path)
    meta = read_json(side) if side.exists() else {}
    return data, hdr, meta


def write_csv(path, header, columns) -> Path:
    """Columns of equal length; floats with 17 significant digits, '\\n' endings."""
    columns = [np.asarray(c) for c in columns]
    if len({c.shape[0] for c in columns}) > 1:
        raise ValueError("columns differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])
    return Path(path)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}
    return cols


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, slice):
        return [obj.start, obj.stop]
    return obj


def write_json(path, obj) -> Path:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return Path(path)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
