"""Flat binary tensor files with a small JSON header.

Layout::

    b"SEPK"                      4-byte magic
    uint32 little-endian         header length H in bytes
    H bytes                      UTF-8 JSON object
    payload                      row-major little-endian float32/float64

The header always carries ``dtype``, ``shape`` and ``endianness`` (``"little"``);
any other keys (``layout``, ``sources``, ...) are caller metadata.
"""
import json
import struct

import numpy as np

from .errors import MalformedFile

MAGIC = b"SEPK"
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_tensor(path, array, dtype="float32", **meta):
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")
    a = np.ascontiguousarray(array, dtype=_DTYPES[dtype])
    header = dict(meta, dtype=dtype, shape=list(a.shape), endianness="little")
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(a.tobytes())


def load_tensor(path):
    """Return ``(array, header)``; raises MalformedFile on any inconsistency."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise MalformedFile(f"{path}: missing tensor-file magic")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if 8 + hlen > len(raw):
        raise MalformedFile(f"{path}: header length {hlen} exceeds file size")
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
        dtype = _DTYPES[header["dtype"]]
        shape = tuple(int(s) for s in header["shape"])
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise MalformedFile(f"{path}: bad header ({exc})") from None
    if header.get("endianness", "little") != "little":
        raise MalformedFile(f"{path}: only little-endian payloads are supported")
    if any(s < 0 for s in shape):
        raise MalformedFile(f"{path}: negative dimension in shape {shape}")
    payload = raw[8 + hlen:]
    expected = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
    if len(payload) != expected:
        raise MalformedFile(
            f"{path}: payload has {len(payload)} bytes, header shape {shape} needs {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy(), header
