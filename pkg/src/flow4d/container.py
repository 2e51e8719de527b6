"""Binary tensor container with a JSON header and whole-file checksum.

Layout:

  bytes 0..3    magic "F4R1"
  bytes 4..11   header length, 64-bit little-endian unsigned
  header        UTF-8 JSON, space-padded so the payload starts on a
                64-byte file offset
  payload       tensors as little-endian float32, each starting on a
                64-byte boundary (zero padding in the gaps)
  last 4 bytes  CRC-32 (little-endian) of every preceding byte

The header object holds ``format_version`` (1), a free-form ``meta``
object, and ``tensors`` mapping each name to its dtype ("f4"), shape,
and byte offset relative to the payload start.  Header JSON is written
canonically (sorted keys, no whitespace) so identical inputs produce
identical files.  Scalars are stored as length-1 vectors.

CRC-32 detects every single-bit corruption anywhere in the file, so
readers verify it before trusting any field.
"""

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass

import numpy as np

from .exceptions import CorruptContainer, ShapeMismatch

MAGIC = b"F4R1"
ALIGN = 64
_PREFIX = len(MAGIC) + 8  # magic + header length


@dataclass(frozen=True)
class Container:
    """Decoded container: name -> float32 array (read-only), plus meta."""

    tensors: dict
    meta: dict


def _align_up(n, align=ALIGN):
    return (n + align - 1) // align * align


def pack(tensors, meta=None):
    """Serialize tensors (name -> array-like) and meta to container bytes."""
    if not tensors:
        raise ShapeMismatch("container needs at least one tensor")
    arrays = {}
    for name, value in tensors.items():
        if not isinstance(name, str) or not name:
            raise ShapeMismatch(f"tensor name must be a non-empty string, got {name!r}")
        arr = np.atleast_1d(np.asarray(value, dtype="<f4"))
        arrays[name] = np.ascontiguousarray(arr)

    specs = {}
    offset = 0
    for name, arr in arrays.items():
        offset = _align_up(offset)
        specs[name] = {
            "dtype": "f4",
            "shape": list(arr.shape),
            "byte_offset": offset,
        }
        offset += arr.nbytes
    payload = bytearray(offset)
    for name, arr in arrays.items():
        start = specs[name]["byte_offset"]
        payload[start:start + arr.nbytes] = arr.tobytes()

    header_obj = {
        "format_version": 1,
        "meta": dict(meta) if meta else {},
        "tensors": specs,
    }
    try:
        header = json.dumps(header_obj, sort_keys=True,
                            separators=(",", ":")).encode("utf-8")
    except (TypeError, ValueError) as exc:
        raise ShapeMismatch(f"meta is not JSON-serializable: {exc}")
    # pad the header so the payload begins on a 64-byte file offset,
    # keeping tensor starts aligned in the file itself
    padded_len = _align_up(_PREFIX + len(header)) - _PREFIX
    header = header.ljust(padded_len, b" ")

    body = MAGIC + struct.pack("<Q", len(header)) + header + bytes(payload)
    return body + struct.pack("<I", zlib.crc32(body))


def unpack(data):
    """Decode container bytes to a Container; raises CorruptContainer on
    any structural or checksum problem."""
    if len(data) < _PREFIX + 4:
        raise CorruptContainer(f"file too short ({len(data)} bytes)")
    stored = struct.unpack("<I", data[-4:])[0]
    actual = zlib.crc32(data[:-4])
    if stored != actual:
        raise CorruptContainer(
            f"checksum mismatch (stored {stored:#010x}, computed {actual:#010x})"
        )
    if data[:4] != MAGIC:
        raise CorruptContainer(f"bad magic {data[:4]!r}")
    header_len = struct.unpack("<Q", data[4:_PREFIX])[0]
    payload_start = _PREFIX + header_len
    if payload_start + 4 > len(data):
        raise CorruptContainer("header length exceeds file size")
    try:
        header = json.loads(data[_PREFIX:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptContainer(f"bad header JSON: {exc}")
    if not isinstance(header, dict) or header.get("format_version") != 1:
        raise CorruptContainer(
            f"unsupported format version {header.get('format_version')!r}"
        )
    specs = header.get("tensors")
    if not isinstance(specs, dict):
        raise CorruptContainer("header has no tensor table")

    payload = data[payload_start:-4]
    tensors = {}
    for name, spec in specs.items():
        try:
            dtype, shape, off = spec["dtype"], spec["shape"], spec["byte_offset"]
        except (TypeError, KeyError):
            raise CorruptContainer(f"tensor {name!r}: malformed spec {spec!r}")
        if dtype != "f4":
            raise CorruptContainer(f"tensor {name!r}: unsupported dtype {dtype!r}")
        shape = tuple(int(s) for s in shape)
        if any(s < 0 for s in shape):
            raise CorruptContainer(f"tensor {name!r}: negative shape {shape}")
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if off % ALIGN != 0 or off < 0 or off + nbytes > len(payload):
            raise CorruptContainer(
                f"tensor {name!r}: bytes [{off}, {off + nbytes}) outside payload"
            )
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=off)
        tensors[name] = arr.reshape(shape)

    meta = header.get("meta", {})
    if not isinstance(meta, dict):
        raise CorruptContainer("meta is not an object")
    return Container(tensors=tensors, meta=meta)


def write(path, tensors, meta=None):
    """Pack and write atomically (temp file in place, then rename)."""
    data = pack(tensors, meta)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def read(path):
    with open(path, "rb") as fh:
        return unpack(fh.read())
