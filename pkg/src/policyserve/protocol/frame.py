"""Wire framing for the stream transport.

Layout: 20-octet fixed header (magic ``VLAG``, version, message type, flags,
request id, payload length), the payload octets, then a CRC-32/ISO-HDLC
trailer computed over the payload only. All integers are little-endian.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum

from ..errors import FrameTooLarge, IntegrityError, ProtocolError

MAGIC = b"VLAG"
VERSION = 1
HEADER_SIZE = 20
TRAILER_SIZE = 4
DEFAULT_MAX_PAYLOAD = 64 << 20  # 64 MiB

FLAG_BATCHED = 0x0001
FLAG_COMPRESSED_IMAGES = 0x0002
_KNOWN_FLAGS = FLAG_BATCHED | FLAG_COMPRESSED_IMAGES

_HEADER = struct.Struct("<4sBBHQI")
_CRC = struct.Struct("<I")


class MsgType(IntEnum):
    HELLO = 0x01
    HELLO_ACK = 0x02
    INITIALIZE = 0x03
    INITIALIZE_ACK = 0x04
    RESET = 0x05
    RESET_ACK = 0x06
    ACT = 0x07
    ACT_ACK = 0x08
    CLOSE = 0x09
    ERROR = 0x0A
    PING = 0x0B
    PING_ACK = 0x0C


def crc32(payload) -> int:
    """CRC-32/ISO-HDLC of ``payload`` (check value of b"123456789" is 0xCBF43926)."""
    return zlib.crc32(payload) & 0xFFFFFFFF


@dataclass
class Frame:
    """One protocol message: type, flags, request id and an encoded-value payload."""

    msg_type: int
    request_id: int
    payload: bytes = b""
    flags: int = 0

    @property
    def batched(self) -> bool:
        return bool(self.flags & FLAG_BATCHED)

    @property
    def compressed(self) -> bool:
        return bool(self.flags & FLAG_COMPRESSED_IMAGES)


def _check_fields(msg_type: int, flags: int, payload_len: int, max_payload: int):
    if msg_type not in MsgType._value2member_map_:
        raise ProtocolError(f"unknown message type {msg_type:#04x}")
    if flags & ~_KNOWN_FLAGS:
        raise ProtocolError(f"reserved flag bits set: {flags:#06x}")
    if payload_len > max_payload:
        raise FrameTooLarge(f"payload of {payload_len} octets exceeds limit {max_payload}")


def pack_header(buf, offset: int, msg_type: int, flags: int, request_id: int,
                payload_len: int, max_payload: int = DEFAULT_MAX_PAYLOAD):
    """Write a validated 20-octet frame header into ``buf`` at ``offset``."""
    _check_fields(msg_type, flags, payload_len, max_payload)
    _HEADER.pack_into(buf, offset, MAGIC, VERSION, msg_type, flags, request_id, payload_len)


def encode_frame(f: Frame, max_payload: int = DEFAULT_MAX_PAYLOAD) -> bytes:
    """Serialize ``f`` to octets: header, payload, CRC trailer."""
    _check_fields(f.msg_type, f.flags, len(f.payload), max_payload)
    buf = bytearray(HEADER_SIZE + len(f.payload) + TRAILER_SIZE)
    _HEADER.pack_into(buf, 0, MAGIC, VERSION, f.msg_type, f.flags, f.request_id, len(f.payload))
    buf[HEADER_SIZE : HEADER_SIZE + len(f.payload)] = f.payload
    _CRC.pack_into(buf, HEADER_SIZE + len(f.payload), crc32(f.payload))
    return bytes(buf)


def decode_header(header: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD):
    """Validate a 20-octet header; returns (msg_type, flags, request_id, payload_len)."""
    if len(header) != HEADER_SIZE:
        raise ProtocolError(f"header must be {HEADER_SIZE} octets, got {len(header)}")
    magic, version, msg_type, flags, request_id, payload_len = _HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    _check_fields(msg_type, flags, payload_len, max_payload)
    return MsgType(msg_type), flags, request_id, payload_len


def decode_frame(data, max_payload: int = DEFAULT_MAX_PAYLOAD) -> Frame:
    """Parse exactly one frame from ``data``, verifying magic, version and CRC."""
    if len(data) < HEADER_SIZE + TRAILER_SIZE:
        raise ProtocolError(f"frame of {len(data)} octets is shorter than the minimum")
    msg_type, flags, request_id, payload_len = decode_header(bytes(data[:HEADER_SIZE]), max_payload)
    total = HEADER_SIZE + payload_len + TRAILER_SIZE
    if len(data) != total:
        raise ProtocolError(f"frame length {len(data)} does not match header ({total})")
    payload = bytes(data[HEADER_SIZE : HEADER_SIZE + payload_len])
    (stated,) = _CRC.unpack_from(data, HEADER_SIZE + payload_len)
    actual = crc32(payload)
    if stated != actual:
        raise IntegrityError(f"payload checksum mismatch: stated {stated:#010x}, computed {actual:#010x}")
    return Frame(msg_type=msg_type, request_id=request_id, payload=payload, flags=flags)
