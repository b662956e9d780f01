"""Versioned binary container shared by all persisted artifacts.

Layout (little-endian):

    magic   4 bytes  b"SVBF"
    version u16
    kind    u16 length + utf-8 bytes
    header  u32 length + utf-8 JSON (artifact metadata)
    count   u32 number of named arrays
    per array:
        name  u16 length + utf-8
        dtype u16 length + utf-8 (numpy dtype string)
        ndim  u8, then ndim u32 dims
        data  raw C-order bytes

Features, vector sets, trained networks and back-end models all use this
container with different `kind` tags. Writes go to a temp name in the
same directory and are renamed on completion.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .errors import FormatError

MAGIC = b"SVBF"
VERSION = 1

_ALLOWED_DTYPES = {"float32", "float64", "int32", "int64"}


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _write_str(f, s):
    raw = s.encode("utf-8")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)


def _read_exact(f, n):
    raw = f.read(n)
    if len(raw) != n:
        raise FormatError("truncated container file")
    return raw


def _read_str(f):
    (n,) = struct.unpack("<H", _read_exact(f, 2))
    return _read_exact(f, n).decode("utf-8")


def write_container(path, kind, header, arrays):
    """Atomically write a container file.

    `header` must be JSON-serializable; `arrays` maps names to ndarrays.
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".svbf-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<H", VERSION))
            _write_str(f, kind)
            hjson = json.dumps(header, sort_keys=True, default=_json_default).encode("utf-8")
            f.write(struct.pack("<I", len(hjson)))
            f.write(hjson)
            f.write(struct.pack("<I", len(arrays)))
            for name in sorted(arrays):
                arr = np.ascontiguousarray(arrays[name])
                if arr.dtype.name not in _ALLOWED_DTYPES:
                    raise FormatError(f"unsupported dtype {arr.dtype} for array {name!r}")
                _write_str(f, name)
                _write_str(f, arr.dtype.name)
                f.write(struct.pack("<B", arr.ndim))
                for d in arr.shape:
                    f.write(struct.pack("<I", d))
                f.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path, expect_kind=None):
    """Read a container; returns (kind, header, arrays).

    Raises FormatError on bad magic, version mismatch, or a kind other
    than `expect_kind` when given.
    """
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise FormatError(f"{path}: not a svbench container (bad magic)")
        (version,) = struct.unpack("<H", _read_exact(f, 2))
        if version != VERSION:
            raise FormatError(f"{path}: container version {version}, expected {VERSION}")
        kind = _read_str(f)
        if expect_kind is not None and kind != expect_kind:
            raise FormatError(f"{path}: kind {kind!r}, expected {expect_kind!r}")
        (hlen,) = struct.unpack("<I", _read_exact(f, 4))
        header = json.loads(_read_exact(f, hlen).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(f, 4))
        arrays = {}
        for _ in range(count):
            name = _read_str(f)
            dtype = _read_str(f)
            if dtype not in _ALLOWED_DTYPES:
                raise FormatError(f"{path}: unsupported dtype {dtype!r}")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1))
            shape = tuple(struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(ndim))
            nbytes = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
            arrays[name] = np.frombuffer(_read_exact(f, nbytes), dtype=dtype).reshape(shape).copy()
    return kind, header, arrays
