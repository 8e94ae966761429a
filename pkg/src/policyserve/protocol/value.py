"""Self-describing binary encoding for protocol values.

A value is one of: None, bool, int (signed 64-bit), float (IEEE-754 double),
str, bytes, list of values, str-keyed dict of values, a dense numeric
``numpy`` array (u8/i64/f32/f64, 1-8 dims, row-major), or a
:class:`CompressedImage`. All multi-byte fields are little-endian. Map
entries encode in ascending key-octet order, which makes the encoding
canonical: encoding, decoding and re-encoding reproduces identical octets.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from ..errors import DecodingError, EncodingError

TAG_NULL = 0x00
TAG_BOOL = 0x01
TAG_INT = 0x02
TAG_REAL = 0x03
TAG_STRING = 0x04
TAG_BYTES = 0x05
TAG_LIST = 0x06
TAG_MAP = 0x07
TAG_ARRAY = 0x08
TAG_IMAGE = 0x09

MAX_ARRAY_DIMS = 8

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

# array element kind codes <-> dtypes (stored little-endian)
_KIND_TO_DTYPE = {
    0: np.dtype("<u1"),
    1: np.dtype("<i8"),
    2: np.dtype("<f4"),
    3: np.dtype("<f8"),
}
_DTYPE_TO_KIND = {
    np.dtype(np.uint8): 0,
    np.dtype(np.int64): 1,
    np.dtype(np.float32): 2,
    np.dtype(np.float64): 3,
}

_CODEC_TO_BYTE = {"jpeg": 0, "png": 1}
_BYTE_TO_CODEC = {0: "jpeg", 1: "png"}

_U32 = struct.Struct("<I")
_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")


@dataclass(frozen=True)
class CompressedImage:
    """A compressed raster whose octets decode to a u8 HxWx3 array."""

    codec: str  # "jpeg" | "png"
    data: bytes

    def __post_init__(self):
        if self.codec not in _CODEC_TO_BYTE:
            raise EncodingError(f"unsupported image codec {self.codec!r}")


Value = Union[
    None, bool, int, float, str, bytes, list, dict, np.ndarray, CompressedImage
]


def _normalized_array(a: np.ndarray) -> np.ndarray:
    """Return ``a`` as a C-contiguous little-endian array of a wire dtype."""
    base = a.dtype.newbyteorder("=")
    if base not in _DTYPE_TO_KIND:
        raise EncodingError(f"array dtype {a.dtype} is not encodable (u8/i64/f32/f64 only)")
    if a.ndim < 1 or a.ndim > MAX_ARRAY_DIMS:
        raise EncodingError(f"array must have 1-{MAX_ARRAY_DIMS} dims, got {a.ndim}")
    want = base.newbyteorder("<")
    if a.dtype != want:
        a = a.astype(want)
    return np.ascontiguousarray(a)


def _sorted_map_items(d: dict) -> list[tuple[bytes, Any]]:
    items = []
    for k, v in d.items():
        if not isinstance(k, str):
            raise EncodingError(f"map keys must be str, got {type(k).__name__}")
        try:
            items.append((k.encode("utf-8"), v))
        except UnicodeEncodeError as e:
            raise EncodingError(f"map key is not valid unicode: {e}") from e
    items.sort(key=lambda kv: kv[0])
    return items


def encoded_size(v: Value) -> int:
    """Exact octet count :func:`encode_into` will write for ``v``."""
    if v is None:
        return 1
    if isinstance(v, bool):
        return 2
    if isinstance(v, int):
        if not INT64_MIN <= v <= INT64_MAX:
            raise EncodingError(f"int {v} does not fit in signed 64 bits")
        return 9
    if isinstance(v, float):
        return 9
    if isinstance(v, str):
        try:
            return 5 + len(v.encode("utf-8"))
        except UnicodeEncodeError as e:
            raise EncodingError(f"string is not valid unicode: {e}") from e
    if isinstance(v, (bytes, bytearray, memoryview)):
        return 5 + len(v)
    if isinstance(v, list):
        return 5 + sum(encoded_size(item) for item in v)
    if isinstance(v, dict):
        n = 5
        for kb, item in _sorted_map_items(v):
            n += 4 + len(kb) + encoded_size(item)
        return n
    if isinstance(v, np.ndarray):
        a = _normalized_array(v)
        return 3 + 4 * a.ndim + a.nbytes
    if isinstance(v, CompressedImage):
        return 6 + len(v.data)
    raise EncodingError(f"cannot encode value of type {type(v).__name__}")


def encode_into(v: Value, buf, offset: int = 0) -> int:
    """Write the encoding of ``v`` into ``buf`` at ``offset``.

    ``buf`` must be a writable buffer with room for :func:`encoded_size`
    octets; array data is copied into it directly, with no intermediate
    serialization buffer. Returns the offset past the written octets.
    """
    if v is None:
        buf[offset] = TAG_NULL
        return offset + 1
    if isinstance(v, bool):
        buf[offset] = TAG_BOOL
        buf[offset + 1] = 1 if v else 0
        return offset + 2
    if isinstance(v, int):
        if not INT64_MIN <= v <= INT64_MAX:
            raise EncodingError(f"int {v} does not fit in signed 64 bits")
        buf[offset] = TAG_INT
        _I64.pack_into(buf, offset + 1, v)
        return offset + 9
    if isinstance(v, float):
        buf[offset] = TAG_REAL
        _F64.pack_into(buf, offset + 1, v)
        return offset + 9
    if isinstance(v, str):
        encoded = v.encode("utf-8")
        buf[offset] = TAG_STRING
        _U32.pack_into(buf, offset + 1, len(encoded))
        offset += 5
        buf[offset : offset + len(encoded)] = encoded
        return offset + len(encoded)
    if isinstance(v, (bytes, bytearray, memoryview)):
        buf[offset] = TAG_BYTES
        _U32.pack_into(buf, offset + 1, len(v))
        offset += 5
        buf[offset : offset + len(v)] = v
        return offset + len(v)
    if isinstance(v, list):
        buf[offset] = TAG_LIST
        _U32.pack_into(buf, offset + 1, len(v))
        offset += 5
        for item in v:
            offset = encode_into(item, buf, offset)
        return offset
    if isinstance(v, dict):
        items = _sorted_map_items(v)
        buf[offset] = TAG_MAP
        _U32.pack_into(buf, offset + 1, len(items))
        offset += 5
        for kb, item in items:
            _U32.pack_into(buf, offset, len(kb))
            offset += 4
            buf[offset : offset + len(kb)] = kb
            offset += len(kb)
            offset = encode_into(item, buf, offset)
        return offset
    if isinstance(v, np.ndarray):
        a = _normalized_array(v)
        buf[offset] = TAG_ARRAY
        buf[offset + 1] = _DTYPE_TO_KIND[a.dtype.newbyteorder("=")]
        buf[offset + 2] = a.ndim
        offset += 3
        for dim in a.shape:
            _U32.pack_into(buf, offset, dim)
            offset += 4
        if a.nbytes:
            buf[offset : offset + a.nbytes] = memoryview(a).cast("B")
        return offset + a.nbytes
    if isinstance(v, CompressedImage):
        buf[offset] = TAG_IMAGE
        buf[offset + 1] = _CODEC_TO_BYTE[v.codec]
        _U32.pack_into(buf, offset + 2, len(v.data))
        offset += 6
        buf[offset : offset + len(v.data)] = v.data
        return offset + len(v.data)
    raise EncodingError(f"cannot encode value of type {type(v).__name__}")


def encode_value(v: Value) -> bytes:
    """Encode ``v`` to its canonical octets."""
    buf = bytearray(encoded_size(v))
    end = encode_into(v, buf, 0)
    assert end == len(buf)
    return bytes(buf)


def _need(data, offset: int, n: int, what: str):
    if offset + n > len(data):
        raise DecodingError(f"truncated input: need {n} octets for {what}", offset)


def _read_u32(data, offset: int, what: str) -> tuple[int, int]:
    _need(data, offset, 4, what)
    return _U32.unpack_from(data, offset)[0], offset + 4


def decode_value(data, offset: int = 0) -> tuple[Value, int]:
    """Decode one value from ``data`` at ``offset``.

    Returns ``(value, consumed)`` where ``consumed`` counts octets read from
    ``offset``. Decoded arrays own their memory (they never alias ``data``).
    """
    value, end = _decode(data, offset)
    return value, end - offset


def _decode(data, offset: int) -> tuple[Value, int]:
    _need(data, offset, 1, "tag")
    tag = data[offset]
    offset += 1
    if tag == TAG_NULL:
        return None, offset
    if tag == TAG_BOOL:
        _need(data, offset, 1, "bool")
        b = data[offset]
        if b not in (0, 1):
            raise DecodingError(f"bool payload must be 0 or 1, got {b:#x}", offset)
        return bool(b), offset + 1
    if tag == TAG_INT:
        _need(data, offset, 8, "int")
        return _I64.unpack_from(data, offset)[0], offset + 8
    if tag == TAG_REAL:
        _need(data, offset, 8, "real")
        return _F64.unpack_from(data, offset)[0], offset + 8
    if tag == TAG_STRING:
        n, offset = _read_u32(data, offset, "string length")
        _need(data, offset, n, "string data")
        try:
            s = bytes(data[offset : offset + n]).decode("utf-8")
        except UnicodeDecodeError as e:
            raise DecodingError(f"invalid UTF-8: {e.reason}", offset + e.start) from e
        return s, offset + n
    if tag == TAG_BYTES:
        n, offset = _read_u32(data, offset, "bytes length")
        _need(data, offset, n, "bytes data")
        return bytes(data[offset : offset + n]), offset + n
    if tag == TAG_LIST:
        count, offset = _read_u32(data, offset, "list count")
        items = []
        for _ in range(count):
            item, offset = _decode(data, offset)
            items.append(item)
        return items, offset
    if tag == TAG_MAP:
        count, offset = _read_u32(data, offset, "map count")
        result: dict[str, Value] = {}
        for _ in range(count):
            klen, offset = _read_u32(data, offset, "map key length")
            _need(data, offset, klen, "map key")
            try:
                key = bytes(data[offset : offset + klen]).decode("utf-8")
            except UnicodeDecodeError as e:
                raise DecodingError(f"invalid UTF-8 in map key: {e.reason}", offset + e.start) from e
            offset += klen
            if key in result:
                raise DecodingError(f"duplicate map key {key!r}", offset)
            item, offset = _decode(data, offset)
            result[key] = item
        return result, offset
    if tag == TAG_ARRAY:
        _need(data, offset, 2, "array header")
        kind = data[offset]
        ndim = data[offset + 1]
        offset += 2
        if kind not in _KIND_TO_DTYPE:
            raise DecodingError(f"unknown array element kind {kind:#x}", offset - 2)
        if ndim < 1 or ndim > MAX_ARRAY_DIMS:
            raise DecodingError(f"array ndim must be 1-{MAX_ARRAY_DIMS}, got {ndim}", offset - 1)
        shape = []
        for _ in range(ndim):
            dim, offset = _read_u32(data, offset, "array dim")
            shape.append(dim)
        dtype = _KIND_TO_DTYPE[kind]
        count = 1
        for dim in shape:
            count *= dim
        nbytes = count * dtype.itemsize
        _need(data, offset, nbytes, "array data")
        if count == 0:
            return np.zeros(shape, dtype=dtype), offset
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        arr = arr.reshape(shape).copy()
        return arr, offset + nbytes
    if tag == TAG_IMAGE:
        _need(data, offset, 1, "image codec")
        codec_byte = data[offset]
        offset += 1
        if codec_byte not in _BYTE_TO_CODEC:
            raise DecodingError(f"unknown image codec {codec_byte:#x}", offset - 1)
        n, offset = _read_u32(data, offset, "image length")
        _need(data, offset, n, "image data")
        img = CompressedImage(_BYTE_TO_CODEC[codec_byte], bytes(data[offset : offset + n]))
        return img, offset + n
    raise DecodingError(f"unknown tag {tag:#04x}", offset - 1)


def values_equal(a: Value, b: Value) -> bool:
    """Structural equality; NaN reals compare equal by bit pattern."""
    if isinstance(a, bool) or isinstance(b, bool):
        return type(a) is type(b) and a == b
    if isinstance(a, float) and isinstance(b, float):
        if a != a and b != b:  # both NaN
            return _F64.pack(a) == _F64.pack(b)
        return a == b
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray):
        return (
            a.dtype.newbyteorder("=") == b.dtype.newbyteorder("=")
            and a.shape == b.shape
            and np.ascontiguousarray(a).tobytes() == np.ascontiguousarray(b).tobytes()
        )
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return False
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(values_equal(v, b[k]) for k, v in a.items())
    if type(a) is not type(b):
        return False
    return a == b
