"""The "SRET" binary tensor format.

Layout (little-endian): magic ``b"SRET"``, version ``u32 = 1``, dtype code
``u8`` (0 = float64), ``ndim u8``, ``ndim`` dims as ``u64``, then the
row-major payload.
"""

import io
import struct

import numpy as np

MAGIC = b"SRET"
VERSION = 1
_DTYPES = {0: np.dtype("<f8")}


class FormatError(ValueError):
    pass


def write_tensor(f, array):
    a = np.asarray(array, dtype="<f8")
    if a.ndim > 255:
        raise FormatError("too many dimensions")
    f.write(MAGIC)
    f.write(struct.pack("<IBB", VERSION, 0, a.ndim))
    f.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    f.write(a.tobytes(order="C"))


def read_tensor(f):
    magic = f.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    head = f.read(6)
    if len(head) != 6:
        raise FormatError("truncated header")
    version, code, ndim = struct.unpack("<IBB", head)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if code not in _DTYPES:
        raise FormatError(f"unsupported dtype code {code}")
    dims = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
    dtype = _DTYPES[code]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = f.read(nbytes)
    if len(payload) != nbytes:
        raise FormatError("truncated payload")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).astype(np.float64)


def to_bytes(array):
    buf = io.BytesIO()
    write_tensor(buf, array)
    return buf.getvalue()


def from_bytes(data):
    return read_tensor(io.BytesIO(data))


def save(path, array):
    with open(path, "wb") as f:
        write_tensor(f, array)


def load(path):
    with open(path, "rb") as f:
        return read_tensor(f)
