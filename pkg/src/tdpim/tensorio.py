"""Raw little-endian tensor files with a one-line JSON header.

Layout: a UTF-8 JSON object terminated by a newline, then each tensor's bytes
in header order. The header lists {name, dtype, shape} per tensor; any other
top-level keys are free-form metadata.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "tdpim-tensor"
VERSION = 1
DTYPES = ("uint8", "int8", "int16", "int32", "int64", "float32", "float64")


class TensorFileError(ValueError):
    pass


def write_tensors(path: str | Path, tensors: dict, **metadata) -> None:
    entries, blobs = [], []
    for name, arr in tensors.items():
        a = np.asarray(arr)
        if a.dtype.name not in DTYPES:
            raise TensorFileError(f"{name}: unsupported dtype {a.dtype}")
        entries.append({"name": name, "dtype": a.dtype.name, "shape": list(a.shape)})
        blobs.append(a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes(order="C"))
    header = {"format": FORMAT, "version": VERSION, "tensors": entries, **metadata}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for b in blobs:
            fh.write(b)


def read_tensors(path: str | Path) -> tuple:
    """Return ({name: array}, metadata)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise TensorFileError(f"cannot read {path}: {exc.strerror}") from None
    nl = raw.find(b"\n")
    try:
        header = json.loads(raw[:nl])
    except (ValueError, UnicodeDecodeError):
        raise TensorFileError(f"{path}: missing or invalid header") from None
    if header.get("format") != FORMAT or header.get("version") != VERSION:
        raise TensorFileError(f"{path}: not a {FORMAT} v{VERSION} file")
    off = nl + 1
    out = {}
    for e in header["tensors"]:
        if e["dtype"] not in DTYPES:
            raise TensorFileError(f"{path}: unsupported dtype {e['dtype']}")
        dt = np.dtype(e["dtype"]).newbyteorder("<")
        n = int(np.prod(e["shape"], dtype=np.int64)) * dt.itemsize
        if off + n > len(raw):
            raise TensorFileError(f"{path}: truncated data for {e['name']!r}")
        out[e["name"]] = np.frombuffer(raw, dtype=dt, count=n // dt.itemsize, offset=off).reshape(e["shape"]).astype(dt.newbyteorder("="))
        off += n
    if off != len(raw):
        raise TensorFileError(f"{path}: {len(raw) - off} trailing bytes")
    meta = {k: v for k, v in header.items() if k not in ("format", "version", "tensors")}
    return out, meta
