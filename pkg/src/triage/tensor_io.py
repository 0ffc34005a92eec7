"""Bit-exact ``.trgb`` tensor container.

Layout::

    b"TRGB" | version:u16le | header_len:u32le | JSON header | zero pad to 64 | payload

The JSON header is the canonical form of ``{"dtype", "name", "shape"}``
(sorted keys, no whitespace), so the bytes written for a given bundle are
identical on every machine. The payload is the row-major, little-endian
element buffer.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import InputError

MAGIC = b"TRGB"
VERSION = 1
ALIGNMENT = 64
MAX_NAME_BYTES = 64
MAX_NDIM = 4

_PREFIX = struct.Struct("<4sHI")
DTYPES = {"f32": np.dtype("<f4"), "i64": np.dtype("<i8")}


class TensorIOError(InputError):
    pass


class BadMagic(TensorIOError):
    pass


class UnsupportedVersion(TensorIOError):
    pass


class MalformedHeader(TensorIOError):
    pass


class LengthMismatch(TensorIOError):
    pass


class InvalidBundle(TensorIOError):
    """A bundle violating its own invariants was handed to the writer."""


@dataclass(frozen=True, eq=False)
class TensorBundle:
    name: str
    dtype: str
    shape: tuple[int, ...]
    data: np.ndarray  # flat, little-endian

    @classmethod
    def from_array(cls, name: str, array) -> "TensorBundle":
        arr = np.asarray(array)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if np.issubdtype(arr.dtype, np.floating):
            tag = "f32"
        elif np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
            tag = "i64"
        else:
            raise InvalidBundle(f"cannot store dtype {arr.dtype} in a bundle")
        data = np.ascontiguousarray(arr, dtype=DTYPES[tag]).reshape(-1)
        data.flags.writeable = False
        return cls(name, tag, tuple(int(d) for d in arr.shape), data)

    def array(self) -> np.ndarray:
        """Return the payload reshaped to ``shape`` (read-only view)."""
        return self.data.reshape(self.shape)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorBundle):
            return NotImplemented
        return (
            self.name == other.name
            and self.dtype == other.dtype
            and tuple(self.shape) == tuple(other.shape)
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None

    def validate(self) -> None:
        if not isinstance(self.name, str):
            raise InvalidBundle("name must be a string")
        try:
            encoded = self.name.encode("ascii")
        except UnicodeEncodeError:
            raise InvalidBundle(f"name {self.name!r} is not ASCII") from None
        if len(encoded) > MAX_NAME_BYTES:
            raise InvalidBundle(f"name longer than {MAX_NAME_BYTES} bytes")
        if self.dtype not in DTYPES:
            raise InvalidBundle(f"unknown dtype tag {self.dtype!r}")
        shape = tuple(self.shape)
        if not 1 <= len(shape) <= MAX_NDIM:
            raise InvalidBundle(f"shape must have 1..{MAX_NDIM} dimensions, got {len(shape)}")
        if any(not isinstance(d, (int, np.integer)) or d < 0 for d in shape):
            raise InvalidBundle(f"shape entries must be non-negative integers: {shape}")
        data = np.asarray(self.data)
        if data.dtype.itemsize != DTYPES[self.dtype].itemsize or data.dtype.kind != DTYPES[self.dtype].kind:
            raise InvalidBundle(f"payload dtype {data.dtype} does not match tag {self.dtype}")
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise InvalidBundle(f"payload has {data.size} elements, shape {shape} needs {int(np.prod(shape))}")


def _header_bytes(name: str, dtype: str, shape) -> bytes:
    doc = {"dtype": dtype, "name": name, "shape": [int(d) for d in shape]}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def _pad_len(n: int) -> int:
    return -n % ALIGNMENT


def encode_bundle(bundle: TensorBundle) -> bytes:
    bundle.validate()
    header = _header_bytes(bundle.name, bundle.dtype, bundle.shape)
    prefix = _PREFIX.pack(MAGIC, VERSION, len(header))
    pad = b"\x00" * _pad_len(len(prefix) + len(header))
    payload = np.ascontiguousarray(bundle.data, dtype=DTYPES[bundle.dtype]).tobytes()
    return prefix + header + pad + payload


def write_bundle(bundle: TensorBundle, destination: BinaryIO | str | Path) -> int:
    """Serialize ``bundle``; returns the number of bytes written.

    The bundle is fully validated and encoded in memory first, so an
    invalid bundle never produces a partial file.
    """
    blob = encode_bundle(bundle)
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as fh:
            fh.write(blob)
    else:
        destination.write(blob)
    return len(blob)


def decode_bundle(blob: bytes) -> TensorBundle:
    if len(blob) < _PREFIX.size:
        if not MAGIC.startswith(blob[:4]):
            raise BadMagic(f"bad magic {blob[:4]!r}")
        raise MalformedHeader("stream shorter than fixed prefix")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"format version {version} (supported: {VERSION})")
    header_end = _PREFIX.size + header_len
    if header_end > len(blob):
        raise MalformedHeader("header length exceeds stream")
    raw = blob[_PREFIX.size:header_end]
    try:
        doc = json.loads(raw.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"header is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or set(doc) != {"dtype", "name", "shape"}:
        raise MalformedHeader("header must hold exactly dtype, name and shape")
    name, dtype, shape = doc["name"], doc["dtype"], doc["shape"]
    if dtype not in DTYPES:
        raise MalformedHeader(f"unknown dtype {dtype!r}")
    if not isinstance(name, str) or not name.isascii() or len(name) > MAX_NAME_BYTES:
        raise MalformedHeader("bad name field")
    if (
        not isinstance(shape, list)
        or not 1 <= len(shape) <= MAX_NDIM
        or any(type(d) is not int or d < 0 for d in shape)
    ):
        raise MalformedHeader(f"bad shape field {shape!r}")
    # Anything but the canonical encoding means the header bytes were altered.
    if raw != _header_bytes(name, dtype, shape):
        raise MalformedHeader("header is not in canonical form")
    payload_start = header_end + _pad_len(header_end)
    if payload_start > len(blob):
        raise LengthMismatch("stream ends inside header padding")
    if any(blob[header_end:payload_start]):
        raise MalformedHeader("non-zero header padding")
    width = DTYPES[dtype].itemsize
    expected = int(np.prod(shape, dtype=np.int64)) * width
    got = len(blob) - payload_start
    if got != expected:
        raise LengthMismatch(f"payload is {got} bytes, shape {shape} x {dtype} needs {expected}")
    data = np.frombuffer(blob, dtype=DTYPES[dtype], offset=payload_start, count=expected // width)
    return TensorBundle(name, dtype, tuple(shape), data)


def read_bundle(source: BinaryIO | bytes | str | Path) -> TensorBundle:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return decode_bundle(bytes(source))
    if isinstance(source, (str, Path)):
        try:
            blob = Path(source).read_bytes()
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc}") from None
        return decode_bundle(blob)
    return decode_bundle(source.read())


def save_array(path: str | Path, name: str, array) -> int:
    return write_bundle(TensorBundle.from_array(name, array), path)


def load_array(path: str | Path) -> np.ndarray:
    return read_bundle(path).array()


def roundtrip(bundle: TensorBundle) -> TensorBundle:
    buf = io.BytesIO()
    write_bundle(bundle, buf)
    return read_bundle(buf.getvalue())
