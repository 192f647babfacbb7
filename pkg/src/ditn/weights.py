"""Bit-exact weight serialization and deterministic weight generation.

File format (``.ditnw``), all integers little-endian:

    magic   7 bytes  ``DITNW1\\0``
    count   u32      number of tensors
    per tensor:
        name_len  u16     UTF-8 name length
        name      bytes   dotted tensor name
        rank      u8
        dims      u32 * rank
        data      f32 * prod(dims), raw little-endian
    crc     u32      CRC32 of everything after the magic

Load of a save is a bitwise identity; any corruption trips the trailing CRC.

Random initialization uses a counter-based splitmix64 generator keyed by
(seed, tensor name), so it is identical on every platform and adding a tensor
never perturbs the values of existing ones.
"""

from __future__ import annotations

import struct
import zlib
from typing import Iterator, Mapping

import numpy as np

from .model import LAYER_NORM, ModelConfig, expected_shapes
from .tensor import Tensor

MAGIC = b"DITNW1\x00"


class WeightFormatError(Exception):
    """Raised for malformed, corrupted, or inconsistent weight files."""


class WeightStore(Mapping[str, Tensor]):
    """Ordered name -> float32 tensor map with unique names."""

    def __init__(self):
        self._tensors: dict[str, np.ndarray] = {}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name in self._tensors:
            raise WeightFormatError(f"duplicate tensor name {name!r}")
        self._tensors[name] = np.ascontiguousarray(value, dtype=np.float32)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def to_bytes(self) -> bytes:
        body = bytearray()
        body += struct.pack("<I", len(self._tensors))
        for name, arr in self._tensors.items():
            encoded = name.encode("utf-8")
            body += struct.pack("<H", len(encoded))
            body += encoded
            body += struct.pack("<B", arr.ndim)
            body += struct.pack(f"<{arr.ndim}I", *arr.shape)
            body += arr.astype("<f4", copy=False).tobytes()
        crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
        return MAGIC + bytes(body) + struct.pack("<I", crc)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "WeightStore":
        if blob[: len(MAGIC)] != MAGIC:
            raise WeightFormatError("bad magic; not a DITNW1 weight file")
        if len(blob) < len(MAGIC) + 8:
            raise WeightFormatError("truncated weight file")
        body, (stored_crc,) = blob[len(MAGIC):-4], struct.unpack("<I", blob[-4:])
        if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
            raise WeightFormatError("CRC mismatch; weight file is corrupted")
        store = cls()
        offset = 0

        def take(n: int) -> bytes:
            nonlocal offset
            if offset + n > len(body):
                raise WeightFormatError("truncated weight payload")
            chunk = body[offset:offset + n]
            offset += n
            return chunk

        (count,) = struct.unpack("<I", take(4))
        for _ in range(count):
            (name_len,) = struct.unpack("<H", take(2))
            name = take(name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", take(1))
            dims = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
            size = 1
            for d in dims:
                size *= d
            data = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims)
            store[name] = data
        if offset != len(body):
            raise WeightFormatError("trailing bytes after the last tensor")
        return store

    def crc32(self) -> int:
        """Checksum of the serialized store; equal stores have equal CRCs."""
        blob = self.to_bytes()
        return struct.unpack("<I", blob[-4:])[0]


def save_weights(store: WeightStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(store.to_bytes())


def load_weights(path) -> WeightStore:
    with open(path, "rb") as fh:
        return WeightStore.from_bytes(fh.read())


# ---------------------------------------------------------------------------
# Deterministic initialization

_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _uniform_unit(name: str, seed: int, count: int) -> np.ndarray:
    """``count`` floats in [-1, 1), keyed by (seed, name), platform-independent."""
    key = np.uint64((seed ^ _fnv1a64(name)) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):  # uint64 arithmetic wraps by design
        counters = (np.arange(1, count + 1, dtype=np.uint64) * _SPLITMIX_GAMMA) + key
        bits = _mix64(counters)
    # Top 24 bits give floats exactly representable in float32.
    u01 = ((bits >> np.uint64(40)).astype(np.float32)) * np.float32(2.0 ** -24)
    return np.float32(2.0) * u01 - np.float32(1.0)


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    # Depthwise kernels have a single input channel per group.
    if len(shape) == 4:
        return shape[1] * shape[2] * shape[3]
    if len(shape) == 2:
        return shape[1]
    return shape[0]


def random_init(config: ModelConfig, seed: int) -> WeightStore:
    """Seeded store with every tensor the config requires.

    Conv and projection weights are uniform(-a, a) with ``a = sqrt(1/fan_in)``;
    biases start at zero, attention temperatures at 1, norm gains at 1. The
    tanh+conv norm weight starts as identity plus small uniform noise so it
    behaves like a gentle affine from the first forward.
    """
    store = WeightStore()
    for name, shape in expected_shapes(config).items():
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if name.endswith(".alpha"):
            arr = np.ones(shape, dtype=np.float32)
        elif name.endswith(".gain"):
            arr = np.ones(shape, dtype=np.float32)
        elif name.endswith(".bias"):
            arr = np.zeros(shape, dtype=np.float32)
        elif name.endswith(".weight"):
            noise = _uniform_unit(name, seed, size).reshape(shape) * np.float32(0.01)
            arr = np.eye(shape[0], dtype=np.float32) + noise
        else:
            a = np.float32(np.sqrt(1.0 / _fan_in(name, shape)))
            arr = (_uniform_unit(name, seed, size) * a).reshape(shape)
        store[name] = arr
    return store


def zero_init(config: ModelConfig) -> WeightStore:
    """All-zero store except attention temperatures (which must stay positive).

    Useful for the residual-identity checks: with these weights the network's
    pre-reconstruction feature equals the shallow feature.
    """
    store = WeightStore()
    for name, shape in expected_shapes(config).items():
        if name.endswith(".alpha"):
            store[name] = np.ones(shape, dtype=np.float32)
        else:
            store[name] = np.zeros(shape, dtype=np.float32)
    return store


# ---------------------------------------------------------------------------
# Embedded configuration metadata

_META_PREFIX = "meta."
_NORM_CODES = {LAYER_NORM: 0.0, "tanh_conv": 1.0}


def embed_config(store: WeightStore, config: ModelConfig) -> None:
    """Record the config as ``meta.*`` scalar tensors so a weight file is
    self-describing; model validation ignores these entries."""
    for key, value in config.to_mapping().items():
        if key == "norm_mode":
            value = _NORM_CODES[value]
        store[_META_PREFIX + key] = np.array([value], dtype=np.float32)


def extract_config(store: Mapping[str, np.ndarray]) -> ModelConfig | None:
    """Rebuild the config from ``meta.*`` entries; None if none are present."""
    meta = {k[len(_META_PREFIX):]: float(v[0]) for k, v in store.items() if k.startswith(_META_PREFIX)}
    if not meta:
        return None
    decode_norm = {code: name for name, code in _NORM_CODES.items()}
    mapping: dict[str, object] = {}
    for key, value in meta.items():
        if key == "norm_mode":
            if value not in decode_norm:
                raise WeightFormatError(f"meta.norm_mode has unknown code {value}")
            mapping[key] = decode_norm[value]
        elif key == "ffn_expansion":
            mapping[key] = value
        else:
            mapping[key] = int(round(value))
    return ModelConfig.from_mapping(mapping)
