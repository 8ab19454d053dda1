"""Binary tensor container used for every on-disk artifact.

Single-tensor files ("HDT1"): magic, u16 version, u8 dtype code, u8 ndim,
ndim x u32 dims, row-major little-endian payload, trailing CRC32 of the
payload.  Multi-tensor containers ("HDTC") hold a JSON metadata block plus a
manifest of named HDT1 blobs; they back generator checkpoints.
"""

import json
import struct
import zlib

import numpy as np

from .errors import TensorFileError

MAGIC = b"HDT1"
CONTAINER_MAGIC = b"HDTC"
VERSION = 1

DTYPE_F64 = 0
DTYPE_C128 = 1
DTYPE_U8 = 2

_DTYPE_NP = {DTYPE_F64: "<f8", DTYPE_C128: "<c16", DTYPE_U8: "u1"}
_DTYPE_SIZE = {DTYPE_F64: 8, DTYPE_C128: 16, DTYPE_U8: 1}


def _dtype_code(arr):
    if arr.dtype == np.uint8 or arr.dtype == np.bool_:
        return DTYPE_U8
    if np.issubdtype(arr.dtype, np.complexfloating):
        return DTYPE_C128
    if np.issubdtype(arr.dtype, np.floating) or np.issubdtype(arr.dtype, np.integer):
        return DTYPE_F64
    raise TensorFileError("unsupported dtype %s" % arr.dtype)


def encode_tensor(arr):
    """Serialize an array to HDT1 bytes."""
    arr = np.asarray(arr)
    code = _dtype_code(arr)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim > 255:
        raise TensorFileError("too many dims")
    payload = np.ascontiguousarray(arr.astype(_DTYPE_NP[code])).tobytes()
    head = MAGIC + struct.pack("<HBB", VERSION, code, arr.ndim)
    head += struct.pack("<%dI" % arr.ndim, *arr.shape)
    return head + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def decode_tensor(buf):
    """Parse HDT1 bytes back into an ndarray, verifying length and CRC."""
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise TensorFileError("bad magic")
    version, code, ndim = struct.unpack("<HBB", buf[4:8])
    if version != VERSION:
        raise TensorFileError("unsupported version %d" % version)
    if code not in _DTYPE_NP:
        raise TensorFileError("unknown dtype code %d" % code)
    off = 8 + 4 * ndim
    if len(buf) < off + 4:
        raise TensorFileError("truncated header")
    dims = struct.unpack("<%dI" % ndim, buf[8:off])
    n_bytes = int(np.prod(dims, dtype=np.int64)) * _DTYPE_SIZE[code]
    if len(buf) != off + n_bytes + 4:
        raise TensorFileError(
            "payload length %d does not match dims %s" % (len(buf) - off - 4, dims)
        )
    payload = buf[off : off + n_bytes]
    (crc,) = struct.unpack("<I", buf[off + n_bytes :])
    if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
        raise TensorFileError("CRC mismatch")
    arr = np.frombuffer(payload, dtype=_DTYPE_NP[code]).reshape(dims)
    return arr.copy()


def write_tensor(path, arr):
    with open(path, "wb") as f:
        f.write(encode_tensor(arr))


def read_tensor(path):
    with open(path, "rb") as f:
        return decode_tensor(f.read())


def tensor_crc(path):
    """CRC32 of the payload, as stored in the file trailer."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 4:
        raise TensorFileError("file too short")
    return struct.unpack("<I", buf[-4:])[0]


def write_container(path, tensors, meta=None):
    """Write named tensors plus a JSON metadata block to one file.

    ``tensors`` is a name -> array mapping; insertion order is preserved so
    reruns are byte-identical.
    """
    meta_json = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode()
    out = [CONTAINER_MAGIC, struct.pack("<HI", VERSION, len(meta_json)), meta_json]
    out.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        blob = encode_tensor(arr)
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<Q", len(blob)))
        out.append(blob)
    with open(path, "wb") as f:
        f.write(b"".join(out))


def read_container(path):
    """Read a container; returns ``(tensors_dict, meta_dict)``."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 10 or buf[:4] != CONTAINER_MAGIC:
        raise TensorFileError("bad container magic")
    version, meta_len = struct.unpack("<HI", buf[4:10])
    if version != VERSION:
        raise TensorFileError("unsupported container version %d" % version)
    off = 10
    meta = json.loads(buf[off : off + meta_len].decode())
    off += meta_len
    (count,) = struct.unpack("<I", buf[off : off + 4])
    off += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", buf[off : off + 2])
        off += 2
        name = buf[off : off + nlen].decode()
        off += nlen
        (blen,) = struct.unpack("<Q", buf[off : off + 8])
        off += 8
        tensors[name] = decode_tensor(buf[off : off + blen])
        off += blen
    return tensors, meta
