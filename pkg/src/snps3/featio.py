"""Binary feature files: one JSON header line, then little-endian float32 data in row-major order."""
from __future__ import annotations

import json

import numpy as np

from snps3.errors import FormatError

_F32 = np.dtype("<f4")


def write_features(path, array) -> None:
    a = np.asarray(array)
    if a.ndim == 2:
        header = {"rows": a.shape[0], "cols": a.shape[1], "dtype": "f32", "order": "row-major"}
    elif a.ndim == 3:
        # token blocks: rows = batch, cols = dim
        header = {"rows": a.shape[0], "cols": a.shape[2], "n_l": a.shape[1], "dtype": "f32", "order": "row-major"}
    else:
        raise ValueError(f"feature arrays must be 2-D or 3-D, got {a.ndim}-D")
    if not np.all(np.isfinite(a)):
        raise ValueError("feature data must be finite")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(a, dtype=_F32).tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line)
        rows, cols = int(header["rows"]), int(header["cols"])
        n_l = header.get("n_l")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad feature header: {exc}") from exc
    if header.get("dtype") != "f32" or header.get("order") != "row-major":
        raise FormatError(f"{path}: only f32 row-major feature files are supported")
    shape = (rows, cols) if n_l is None else (rows, int(n_l), cols)
    expected = int(np.prod(shape)) * _F32.itemsize
    if len(payload) != expected:
        raise FormatError(f"{path}: expected {expected} data bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype=_F32).reshape(shape)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite values")
    return data.copy()
