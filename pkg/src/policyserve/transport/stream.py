"""Framed TCP transport: one length-prefixed frame per send/recv.

Small-packet coalescing (Nagle) is disabled on every socket; the protocol
is strict request/response, so per-call latency dominates throughput.
"""

from __future__ import annotations

import os
import select
import socket
import struct
import time

from ..errors import ConnectionLost, FrameTooLarge, IntegrityError
from ..errors import TimeoutError as DeadlineError
from ..protocol.frame import (
    DEFAULT_MAX_PAYLOAD,
    HEADER_SIZE,
    TRAILER_SIZE,
    Frame,
    crc32,
    decode_header,
    encode_frame,
    pack_header,
)
from ..protocol.value import encode_into, encoded_size

_CRC = struct.Struct("<I")

# The client's reply wait can optionally poll the socket before blocking
# (POLICYSERVE_STREAM_POLL_US): a scheduler wakeup costs 50-200us, which
# dominates small-frame round trips on dedicated hosts. Default off: on
# shared/oversubscribed hosts the extra spin inflates tail latency.
DEFAULT_POLL_WINDOW_S = 0.0


def poll_window_s() -> float:
    raw = os.environ.get("POLICYSERVE_STREAM_POLL_US", "")
    try:
        return float(raw) * 1e-6 if raw else DEFAULT_POLL_WINDOW_S
    except ValueError:
        return DEFAULT_POLL_WINDOW_S


def _poll_readable(sock: socket.socket, window_s: float):
    if window_s <= 0:
        return
    end = time.monotonic() + window_s
    while time.monotonic() < end:
        readable, _, _ = select.select([sock], [], [], 0)
        if readable:
            return
        time.sleep(0)


def configure_socket(sock: socket.socket):
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)


def _recv_exact(sock: socket.socket, view: memoryview, eof_ok_at_start: bool = False) -> bool:
    """Fill ``view`` from the socket. Returns False on clean EOF before any octet."""
    got = 0
    total = len(view)
    while got < total:
        try:
            n = sock.recv_into(view[got:], total - got)
        except socket.timeout as e:
            raise DeadlineError("stream read timed out") from e
        except OSError as e:
            raise ConnectionLost(f"connection lost mid-frame: {e}") from e
        if n == 0:
            if got == 0 and eof_ok_at_start:
                return False
            raise ConnectionLost("peer closed the connection mid-frame")
        got += n
    return True


def _sendall(sock: socket.socket, data):
    try:
        sock.sendall(data)
    except socket.timeout as e:
        raise DeadlineError("stream write timed out") from e
    except OSError as e:
        raise ConnectionLost(f"connection lost while sending: {e}") from e


def stream_send(sock: socket.socket, f: Frame, max_payload: int = DEFAULT_MAX_PAYLOAD):
    """Write one frame. The payload must already be encoded octets."""
    _sendall(sock, encode_frame(f, max_payload))


def stream_send_value(sock: socket.socket, msg_type: int, request_id: int, value,
                      *, flags: int = 0, max_payload: int = DEFAULT_MAX_PAYLOAD):
    """Encode ``value`` straight into a single frame buffer and send it.

    One allocation holds header, payload and CRC trailer; array data is
    copied into it exactly once.
    """
    n = encoded_size(value)
    if n > max_payload:
        raise FrameTooLarge(f"payload of {n} octets exceeds limit {max_payload}")
    buf = bytearray(HEADER_SIZE + n + TRAILER_SIZE)
    pack_header(buf, 0, msg_type, flags, request_id, n, max_payload)
    end = encode_into(value, buf, HEADER_SIZE)
    _CRC.pack_into(buf, end, crc32(memoryview(buf)[HEADER_SIZE:end]))
    _sendall(sock, buf)


def stream_recv(sock: socket.socket, max_payload: int = DEFAULT_MAX_PAYLOAD,
                eof_ok: bool = False, poll_window: float = 0.0) -> Frame | None:
    """Read exactly one frame; verifies magic, version and checksum.

    With ``eof_ok`` a clean close at a frame boundary returns None instead
    of raising ConnectionLost. ``poll_window`` busy-polls readability for
    that many seconds before the blocking read.
    """
    _poll_readable(sock, poll_window)
    header = bytearray(HEADER_SIZE)
    if not _recv_exact(sock, memoryview(header), eof_ok_at_start=eof_ok):
        return None
    msg_type, flags, request_id, payload_len = decode_header(bytes(header), max_payload)
    body = bytearray(payload_len + TRAILER_SIZE)
    _recv_exact(sock, memoryview(body))
    payload = bytes(memoryview(body)[:payload_len])
    (stated,) = _CRC.unpack_from(body, payload_len)
    actual = crc32(payload)
    if stated != actual:
        err = IntegrityError(
            f"payload checksum mismatch: stated {stated:#010x}, computed {actual:#010x}")
        err.request_id = request_id
        raise err
    return Frame(msg_type=msg_type, request_id=request_id, payload=payload, flags=flags)
