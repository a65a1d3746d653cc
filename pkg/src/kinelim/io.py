"""Config loading and deterministic writers: CSV, JSON and the binary snapshot container."""

import json
import struct
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "load_toml",
    "write_csv",
    "read_csv",
    "write_json",
    "SnapshotWriter",
    "read_snapshots",
    "MAGIC",
]

MAGIC = b"KINELIM-SNAP\x00v1\n"
_HEADER = struct.Struct("<I")  # length of the JSON header that follows the magic
_RECORD = struct.Struct("<dQ")  # time, number of float64 values


def load_toml(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    """Rows are mappings or sequences; floats use repr so re-reading is exact."""
    lines = [",".join(header)]
    for row in rows:
        vals = [row[h] for h in header] if isinstance(row, dict) else list(row)
        lines.append(",".join(_fmt(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        row = {}
        for h, v in zip(header, line.split(",")):
            try:
                row[h] = float(v)
            except ValueError:
                row[h] = v
        out.append(row)
    return header, out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


class SnapshotWriter:
    """Append-only container: magic, a length-prefixed JSON header, then (t, count, float64 data) records.

    The header records the array shape; every record holds one array of that shape.
    """

    def __init__(self, path, shape, meta=None):
        self.path = Path(path)
        self.shape = tuple(int(s) for s in shape)
        head = json.dumps({"shape": list(self.shape), "dtype": "<f8", "meta": _jsonable(meta or {})}, sort_keys=True)
        raw = head.encode()
        with self.path.open("wb") as fh:
            fh.write(MAGIC + _HEADER.pack(len(raw)) + raw)
        self.count = 0

    def append(self, t, values):
        arr = np.ascontiguousarray(values, dtype="<f8")
        if arr.shape != self.shape:
            raise ValueError(f"snapshot shape {arr.shape} differs from the header shape {self.shape}")
        with self.path.open("ab") as fh:
            fh.write(_RECORD.pack(float(t), arr.size))
            fh.write(arr.tobytes())
        self.count += 1


def read_snapshots(path):
    """Return (times, arrays, header)."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path} is not a snapshot container")
    pos = len(MAGIC)
    (hlen,) = _HEADER.unpack_from(data, pos)
    pos += _HEADER.size
    header = json.loads(data[pos : pos + hlen])
    pos += hlen
    shape = tuple(header["shape"])
    times, arrays = [], []
    while pos < len(data):
        t, count = _RECORD.unpack_from(data, pos)
        pos += _RECORD.size
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        times.append(t)
        arrays.append(arr.copy())
    return np.array(times), arrays, header
