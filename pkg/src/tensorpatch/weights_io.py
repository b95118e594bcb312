"""Model weight containers backed by the safetensors byte layout.

The on-disk format is implemented directly from its public byte-level
description: an 8-byte little-endian header length, a UTF-8 JSON header
mapping tensor names to ``{dtype, shape, data_offsets}``, then the raw
contiguous payload.  Raw bytes are retained per entry so that untouched
tensors round-trip bit-exactly; patched entries are re-encoded from
float64 with round-to-nearest-even at save time.

Only 2-D float tensors (f16/bf16/f32/f64) are patchable; everything else
passes through opaquely.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

__all__ = [
    "ContainerError",
    "WeightEntry",
    "ModelWeights",
    "load_weights",
    "save_weights",
    "FLOAT_DTYPES",
]


class ContainerError(Exception):
    """Raised when a weights file does not parse as a safetensors container."""


# element sizes for every dtype tag the format defines
_DTYPE_SIZES = {
    "BOOL": 1,
    "U8": 1,
    "I8": 1,
    "F8_E4M3": 1,
    "F8_E5M2": 1,
    "I16": 2,
    "U16": 2,
    "F16": 2,
    "BF16": 2,
    "I32": 4,
    "U32": 4,
    "F32": 4,
    "I64": 8,
    "U64": 8,
    "F64": 8,
}

FLOAT_DTYPES = ("F16", "BF16", "F32", "F64")


def _decode_f64(raw: bytes, dtype: str, shape: tuple[int, ...]) -> np.ndarray:
    if dtype == "F64":
        arr = np.frombuffer(raw, dtype="<f8")
    elif dtype == "F32":
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    elif dtype == "F16":
        arr = np.frombuffer(raw, dtype="<f2").astype(np.float64)
    elif dtype == "BF16":
        bits = np.frombuffer(raw, dtype="<u2").astype(np.uint32) << 16
        arr = bits.view(np.float32).astype(np.float64)
    else:
        raise ContainerError(f"dtype {dtype} has no float decoding")
    return arr.reshape(shape)


def _encode_from_f64(values: np.ndarray, dtype: str) -> bytes:
    """Down-convert float64 values to the stored dtype with round-to-nearest-even."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    if dtype == "F64":
        return values.astype("<f8").tobytes()
    if dtype == "F32":
        return values.astype("<f4").tobytes()
    if dtype == "F16":
        return values.astype("<f2").tobytes()
    if dtype == "BF16":
        bits = values.astype("<f4").view("<u4")
        keep_lsb = (bits >> 16) & 1
        rounded = (bits + 0x7FFF + keep_lsb) >> 16
        return rounded.astype("<u2").tobytes()
    raise ContainerError(f"dtype {dtype} has no float encoding")


@dataclass(frozen=True)
class WeightEntry:
    """One named tensor: dtype tag, shape, and its exact payload bytes."""

    dtype: str
    shape: tuple[int, ...]
    raw: bytes

    def __post_init__(self):
        if self.dtype not in _DTYPE_SIZES:
            raise ContainerError(f"unsupported dtype {self.dtype!r}")
        expected = int(np.prod(self.shape, dtype=np.int64)) * _DTYPE_SIZES[self.dtype]
        if len(self.raw) != expected:
            raise ContainerError(
                f"payload of {len(self.raw)} bytes does not match "
                f"dtype {self.dtype} shape {self.shape} ({expected} bytes)"
            )

    @property
    def is_patchable(self) -> bool:
        """True for 2-D float tensors, the only patch targets."""
        return len(self.shape) == 2 and self.dtype in FLOAT_DTYPES

    def to_f64(self) -> np.ndarray:
        if self.dtype not in FLOAT_DTYPES:
            raise ContainerError(f"entry with dtype {self.dtype} is opaque")
        return _decode_f64(self.raw, self.dtype, self.shape)

    @classmethod
    def from_f64(cls, values: np.ndarray, dtype: str) -> "WeightEntry":
        values = np.asarray(values, dtype=np.float64)
        return cls(dtype=dtype, shape=values.shape, raw=_encode_from_f64(values, dtype))


class ModelWeights:
    """Ordered, immutable mapping of tensor names to :class:`WeightEntry`.

    Patching returns a new container sharing every untouched entry, so the
    source container can never be mutated behind a caller's back.
    """

    __slots__ = ("_entries", "_metadata")

    def __init__(
        self,
        entries: Mapping[str, WeightEntry],
        metadata: Mapping[str, str] | None = None,
    ):
        self._entries: dict[str, WeightEntry] = dict(entries)
        self._metadata: dict[str, str] = dict(metadata or {})
        for k, v in self._metadata.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise ContainerError("metadata must map strings to strings")

    @property
    def metadata(self) -> dict[str, str]:
        return dict(self._metadata)

    def names(self) -> list[str]:
        return list(self._entries)

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def entry(self, name: str) -> WeightEntry:
        if name not in self._entries:
            raise KeyError(f"no weight named {name!r}")
        return self._entries[name]

    def matrix(self, name: str) -> np.ndarray:
        """The named 2-D float tensor as a float64 matrix."""
        e = self.entry(name)
        if not e.is_patchable:
            raise ValueError(
                f"weight {name!r} (dtype {e.dtype}, shape {e.shape}) is not a 2-D float matrix"
            )
        return e.to_f64()

    def replace_matrix(self, name: str, values: np.ndarray) -> "ModelWeights":
        """New container with ``name`` re-encoded from ``values`` in its original dtype."""
        e = self.entry(name)
        if not e.is_patchable:
            raise ValueError(f"weight {name!r} is not patchable")
        values = np.asarray(values, dtype=np.float64)
        if values.shape != e.shape:
            raise ValueError(
                f"replacement for {name!r} has shape {values.shape}, expected {e.shape}"
            )
        if not np.isfinite(values).all():
            raise ValueError(f"replacement for {name!r} contains non-finite values")
        entries = dict(self._entries)
        entries[name] = WeightEntry.from_f64(values, e.dtype)
        return ModelWeights(entries, self._metadata)

    def patchable_names(self) -> list[str]:
        return [n for n, e in self._entries.items() if e.is_patchable]


def load_weights(path) -> ModelWeights:
    """Parse a safetensors file into a :class:`ModelWeights` container."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise ContainerError(f"{path}: file too short for a header length")
    (header_len,) = struct.unpack("<Q", blob[:8])
    if 8 + header_len > len(blob):
        raise ContainerError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: malformed JSON header: {exc}") from exc
    if not isinstance(header, dict):
        raise ContainerError(f"{path}: header is not a JSON object")

    payload = blob[8 + header_len :]
    metadata = header.pop("__metadata__", {})
    entries: dict[str, WeightEntry] = {}
    for name, info in header.items():
        if not isinstance(info, dict):
            raise ContainerError(f"{path}: entry {name!r} is not an object")
        try:
            dtype = info["dtype"]
            shape = tuple(int(s) for s in info["shape"])
            start, end = (int(o) for o in info["data_offsets"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerError(f"{path}: entry {name!r} has a malformed descriptor") from exc
        if dtype not in _DTYPE_SIZES:
            raise ContainerError(f"{path}: entry {name!r} has unsupported dtype {dtype!r}")
        if not 0 <= start <= end <= len(payload):
            raise ContainerError(f"{path}: entry {name!r} payload is truncated")
        entries[name] = WeightEntry(dtype=dtype, shape=shape, raw=payload[start:end])
    return ModelWeights(entries, metadata)


def save_weights(w: ModelWeights, path) -> None:
    """Serialize the container, writing entries contiguously in their order."""
    header: dict[str, object] = {}
    if w.metadata:
        header["__metadata__"] = w.metadata
    offset = 0
    chunks: list[bytes] = []
    for name in w:
        e = w.entry(name)
        header[name] = {
            "dtype": e.dtype,
            "shape": list(e.shape),
            "data_offsets": [offset, offset + len(e.raw)],
        }
        chunks.append(e.raw)
        offset += len(e.raw)
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for chunk in chunks:
            fh.write(chunk)
