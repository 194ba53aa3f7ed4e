"""Shared helpers for the line-delimited manifest+payload file formats.

Numeric arrays travel as base64-encoded little-endian values with an explicit
shape and dtype, so round trips are bit-exact and independent of host
byte order.
"""

from __future__ import annotations

import base64
import json
from typing import Any

import numpy as np

__all__ = [
    "FormatError",
    "encode_array",
    "decode_array",
    "dump_record",
    "parse_record",
]

# dtypes are pinned to explicit little-endian codes on disk
_DTYPE_CODES = {
    "f4": np.dtype("<f4"),
    "f8": np.dtype("<f8"),
    "i8": np.dtype("<i8"),
    "u1": np.dtype("<u1"),
}


class FormatError(ValueError):
    """A persisted file does not match the declared format."""


def encode_array(arr: np.ndarray, dtype: str = "f4") -> dict[str, Any]:
    """Encode an array as {shape, dtype, data} with base64 payload."""
    if dtype not in _DTYPE_CODES:
        raise ValueError(f"unsupported dtype code {dtype!r}")
    flat = np.ascontiguousarray(arr, dtype=_DTYPE_CODES[dtype])
    return {
        "shape": list(arr.shape),
        "dtype": dtype,
        "data": base64.b64encode(flat.tobytes()).decode("ascii"),
    }


def decode_array(spec: dict[str, Any]) -> np.ndarray:
    """Decode an array written by :func:`encode_array`, checking its shape."""
    try:
        shape = tuple(int(s) for s in spec["shape"])
        dtype = spec["dtype"]
        raw = base64.b64decode(spec["data"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed array record: {exc}") from exc
    if dtype not in _DTYPE_CODES:
        raise FormatError(f"unsupported dtype code {dtype!r}")
    np_dtype = _DTYPE_CODES[dtype]
    expected = int(np.prod(shape)) * np_dtype.itemsize
    if len(raw) != expected:
        raise FormatError(
            f"array payload holds {len(raw)} bytes but shape {shape} "
            f"with dtype {dtype} requires {expected}"
        )
    return np.frombuffer(raw, dtype=np_dtype).reshape(shape).copy()


def dump_record(record: dict[str, Any]) -> str:
    """Serialize one record to a single JSON line with stable key order."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def parse_record(line: str) -> dict[str, Any]:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"unparseable record line: {exc}") from exc
    if not isinstance(rec, dict):
        raise FormatError("record line is not an object")
    return rec
