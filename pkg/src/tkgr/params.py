"""Named, versioned parameter arrays and the binary checkpoint container."""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from .errors import IntegrityError, ShapeMismatchError

torch.set_default_dtype(torch.float64)

MAGIC = b"TKGRCKPT"
FORMAT_VERSION = 1
_DTYPE_F64 = 1


def glorot(rng: np.random.Generator, shape) -> np.ndarray:
    shape = tuple(shape)
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        fan_in, fan_out = shape[-1], shape[-2]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ParameterStore:
    """Ordered ``name -> float64 tensor`` map with a monotone version counter.

    The version is bumped after every optimizer step; caches keyed on it
    (e.g. the representation table) become stale automatically.
    """

    def __init__(self):
        self._params: dict[str, torch.Tensor] = {}
        self.version = 0

    def add(self, name: str, value) -> torch.Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        tensor = torch.as_tensor(np.asarray(value, dtype=np.float64)).clone().requires_grad_(True)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> torch.Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix: str = ""):
        return [n for n in self._params if n.startswith(prefix)]

    def group(self, prefix: str):
        return [p for n, p in self._params.items() if n.startswith(prefix)]

    def bump(self):
        self.version += 1

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: p.detach().numpy().copy() for n, p in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise ShapeMismatchError(
                f"parameter names differ (missing {sorted(missing)}, unexpected {sorted(extra)})")
        for name, value in arrays.items():
            p = self._params[name]
            if tuple(p.shape) != tuple(value.shape):
                raise ShapeMismatchError(
                    f"{name}: checkpoint shape {tuple(value.shape)} != model shape {tuple(p.shape)}")
            with torch.no_grad():
                p.copy_(torch.as_tensor(value))
        self.bump()


def save_checkpoint(store: ParameterStore, config: dict, path) -> None:
    config_bytes = json.dumps(config, sort_keys=True).encode()
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", FORMAT_VERSION, len(config_bytes))
    out += config_bytes
    out += struct.pack("<IQ", len(store), store.version)
    for name, tensor in store.items():
        arr = np.ascontiguousarray(tensor.detach().numpy(), dtype="<f8")
        name_b = name.encode()
        rec = bytearray()
        rec += struct.pack("<H", len(name_b)) + name_b
        rec += struct.pack("<BB", _DTYPE_F64, arr.ndim)
        rec += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        payload = arr.tobytes()
        rec += struct.pack("<Q", len(payload)) + payload
        out += rec + struct.pack("<I", zlib.crc32(rec))
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise IntegrityError(f"truncated file while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path):
    """Read a checkpoint; returns ``(arrays, config_dict, version)``."""
    data = Path(path).read_bytes()
    reader = _Reader(data)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise IntegrityError("not a checkpoint file (bad magic)")
    fmt_version, config_len = reader.unpack("<II", "header")
    if fmt_version != FORMAT_VERSION:
        raise IntegrityError(f"unsupported checkpoint format version {fmt_version}")
    try:
        config = json.loads(reader.take(config_len, "config block"))
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"corrupt config block: {exc}") from None
    n_records, version = reader.unpack("<IQ", "record count")
    arrays = {}
    for i in range(n_records):
        start = reader.pos
        label = f"record {i}"
        try:
            (name_len,) = reader.unpack("<H", label)
            name = reader.take(name_len, label).decode()
            label = f"record {i} ({name!r})"
            dtype, ndim = reader.unpack("<BB", label)
            shape = reader.unpack(f"<{ndim}Q", label)
            (n_bytes,) = reader.unpack("<Q", label)
            payload = reader.take(n_bytes, label)
            rec = data[start:reader.pos]
            (crc,) = reader.unpack("<I", label)
        except UnicodeDecodeError:
            raise IntegrityError(f"{label}: corrupt name") from None
        if crc != zlib.crc32(rec):
            raise IntegrityError(f"{label}: checksum mismatch")
        if dtype != _DTYPE_F64 or n_bytes != 8 * int(np.prod(shape, dtype=np.int64)):
            raise IntegrityError(f"{label}: inconsistent dtype or payload size")
        arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if reader.pos != len(data):
        raise IntegrityError("trailing bytes after last record")
    return arrays, config, version
