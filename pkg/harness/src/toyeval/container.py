"""Minimal safetensors reader: named float tensors from the standard byte layout.

Layout: 8-byte little-endian header length, UTF-8 JSON header mapping names
to {dtype, shape, data_offsets}, then the raw payload.  Only float dtypes
are decoded; other entries are ignored (the toy classifier needs none).
"""

from __future__ import annotations

import json
import struct

import numpy as np

__all__ = ["FormatError", "read_float_tensors"]


class FormatError(Exception):
    """The file does not parse as a safetensors container."""


def _decode(raw: bytes, dtype: str) -> np.ndarray | None:
    if dtype == "F64":
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if dtype == "F32":
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if dtype == "F16":
        return np.frombuffer(raw, dtype="<f2").astype(np.float64)
    if dtype == "BF16":
        bits = np.frombuffer(raw, dtype="<u2").astype(np.uint32) << 16
        return bits.view(np.float32).astype(np.float64)
    return None


def read_float_tensors(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Returns (float tensors as float64 arrays, string metadata)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise FormatError("file too short for a safetensors header")
    (header_len,) = struct.unpack("<Q", blob[:8])
    if 8 + header_len > len(blob):
        raise FormatError("header length exceeds file size")
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed JSON header: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError("header is not a JSON object")

    payload = blob[8 + header_len :]
    metadata = header.pop("__metadata__", {}) or {}
    tensors: dict[str, np.ndarray] = {}
    for name, info in header.items():
        try:
            dtype = info["dtype"]
            shape = tuple(int(s) for s in info["shape"])
            start, end = (int(o) for o in info["data_offsets"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"entry {name!r} has a malformed descriptor") from exc
        if not 0 <= start <= end <= len(payload):
            raise FormatError(f"entry {name!r} payload is truncated")
        values = _decode(payload[start:end], dtype)
        if values is None:
            continue
        if values.size != int(np.prod(shape, dtype=np.int64)):
            raise FormatError(f"entry {name!r} payload does not match its shape")
        tensors[name] = values.reshape(shape)
    return tensors, {str(k): str(v) for k, v in metadata.items()}
