"""Connection establishment and the connection-aware transport negotiation.

The client proves same-host reachability by attaching the server's named
segment and matching the random nonce advertised in HELLO_ACK; any failure
silently falls back to the stream, so negotiation always yields a usable
mode. Force stream mode with ``POLICYSERVE_FORCE_STREAM=1``.
"""

from __future__ import annotations

import os
import select
import socket
import time
from dataclasses import dataclass

from ..errors import ChannelClosed, ConnectionLost, ProtocolError, ServerError
from ..protocol.frame import Frame, MsgType
from ..protocol.value import decode_value
from . import shm as shm_mod
from .shm import ShmSegment
from .stream import poll_window_s, stream_recv, stream_send, stream_send_value

HANDSHAKE_TIMEOUT = 30.0
PROTO_VERSION = 1

MODE_SHM = "shm"
MODE_STREAM = "stream"


def force_stream_env() -> bool:
    return os.environ.get("POLICYSERVE_FORCE_STREAM", "").strip().lower() in ("1", "true", "yes")


@dataclass(frozen=True)
class TransportMode:
    """The negotiated channel kind and its parameters."""

    kind: str  # "shm" | "stream"
    address: tuple[str, int]
    shm_name: str | None = None
    shm_capacity: int | None = None
    nonce: bytes | None = None


def _decode_payload_map(frame: Frame) -> dict:
    value, _ = decode_value(frame.payload)
    if not isinstance(value, dict):
        raise ProtocolError(f"{MsgType(frame.msg_type).name} payload must be a map")
    return value


class _Doorbell:
    """Socket-based wakeups for the shared-memory channel.

    The segment's state word stays the source of truth; a one-octet nudge
    on the session's otherwise idle TCP connection lets long waits block in
    the kernel instead of spinning, and doubles as the liveness signal
    (EOF means the peer is gone).
    """

    def __init__(self, sock: socket.socket):
        self.sock = sock
        sock.setblocking(False)

    def ring(self):
        try:
            self.sock.send(b"\x01")
        except OSError:
            pass  # peer gone or buffer full; the state word still carries it

    def drain(self):
        try:
            while True:
                data = self.sock.recv(4096)
                if data == b"":
                    raise ChannelClosed("peer closed the connection")
                if len(data) < 4096:
                    return
        except (BlockingIOError, InterruptedError):
            return
        except OSError as e:
            raise ChannelClosed(f"connection lost: {e}") from e

    def wait(self, max_wait_s: float):
        try:
            readable, _, _ = select.select([self.sock], [], [], max_wait_s)
        except (OSError, ValueError) as e:
            raise ChannelClosed(f"connection lost: {e}") from e
        if readable:
            self.drain()


# ---------------------------------------------------------------------------
# server side
# ---------------------------------------------------------------------------


class SessionTransport:
    """Server-side request/response channel for one negotiated session."""

    def __init__(self, conn: socket.socket, mode: str, segment: ShmSegment | None,
                 peer: tuple[str, int]):
        self.conn = conn
        self.mode = mode
        self.segment = segment
        self.peer = peer
        self._doorbell = _Doorbell(conn) if mode == MODE_SHM else None
        self._closed = False

    def recv_request(self) -> Frame | None:
        """Next request frame, or None once the client is gone."""
        if self._closed:
            return None
        if self.mode == MODE_SHM:
            try:
                return self.segment.recv_request(copy=False, waiter=self._doorbell.wait)
            except ChannelClosed:
                return None
        try:
            # the server blocks here: only the client's reply wait may poll,
            # so the two sides never spin against each other
            return stream_recv(self.conn, eof_ok=True)
        except ConnectionLost:
            return None

    def send_response(self, msg_type: int, request_id: int, payload=b"", *, flags: int = 0):
        if self.mode == MODE_SHM:
            self.segment.send_response(msg_type, request_id, payload, flags=flags)
            self._doorbell.ring()
        elif isinstance(payload, (bytes, bytearray, memoryview)):
            stream_send(self.conn, Frame(msg_type, request_id, bytes(payload), flags))
        else:
            stream_send_value(self.conn, msg_type, request_id, payload, flags=flags)

    def signal_close(self):
        """Wake the serving thread so it tears the session down itself.

        Safe to call from any thread; the segment stays mapped until the
        owning thread reaches :meth:`close` (in-flight payload views remain
        valid).
        """
        if self.segment is not None:
            self.segment.close_channel()
        try:
            self.conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass

    def close(self):
        if self._closed:
            return
        self._closed = True
        self.signal_close()
        if self.segment is not None:
            self.segment.detach()
            self.segment = None
        self.conn.close()


def server_negotiate(conn: socket.socket, shm_capacity: int,
                     shm_prefix: str = "policyserve") -> SessionTransport:
    """Run the server half of the handshake on a fresh connection.

    Raises ProtocolError when the client speaks a different protocol; the
    caller owns closing the socket in that case.
    """
    peer = conn.getpeername()
    conn.settimeout(HANDSHAKE_TIMEOUT)
    hello = stream_recv(conn)
    if hello.msg_type != MsgType.HELLO:
        raise ProtocolError(f"expected HELLO, got {MsgType(hello.msg_type).name}")
    params = _decode_payload_map(hello)
    if params.get("proto_version") != PROTO_VERSION:
        stream_send_value(conn, MsgType.ERROR, hello.request_id,
                          {"code": "unsupported_version",
                           "message": f"server speaks protocol version {PROTO_VERSION}"})
        raise ProtocolError(f"client protocol version {params.get('proto_version')!r}")

    segment = shm_mod.create_segment(capacity=shm_capacity,
                                     name=shm_mod.make_segment_name(shm_prefix))
    try:
        stream_send_value(conn, MsgType.HELLO_ACK, hello.request_id,
                          {"shm_name": segment.name,
                           "shm_capacity": segment.capacity,
                           "nonce": segment.nonce})
        mode = _await_first_contact(conn, segment)
    except Exception:
        segment.detach()
        raise

    if mode == MODE_STREAM:
        segment.detach()
        segment = None
    conn.settimeout(None)
    return SessionTransport(conn, mode, segment, peer)


def _await_first_contact(conn: socket.socket, segment: ShmSegment) -> str:
    """Wait for the client's first move: a request through the segment
    selects shared memory, readable octets on the socket select the stream
    (the frame itself is left for the session loop to read)."""
    deadline = time.monotonic() + HANDSHAKE_TIMEOUT
    while True:
        if segment.state() == shm_mod.STATE_REQUEST_READY:
            return MODE_SHM
        readable, _, _ = select.select([conn], [], [], 0.0005)
        if readable:
            return MODE_STREAM
        if time.monotonic() > deadline:
            raise ProtocolError("client never selected a transport")


# ---------------------------------------------------------------------------
# client side
# ---------------------------------------------------------------------------


class ClientChannel:
    """Client-side request/response channel over the negotiated transport."""

    def __init__(self, sock: socket.socket, mode: TransportMode,
                 segment: ShmSegment | None):
        self.sock = sock
        self.mode = mode
        self.segment = segment
        self._doorbell = _Doorbell(sock) if mode.kind == MODE_SHM else None
        self._closed = False
        self._timeout: float | None = None

    def _set_timeout(self, deadline: float | None):
        if deadline != self._timeout:
            self.sock.settimeout(deadline)
            self._timeout = deadline

    def call(self, msg_type: int, request_id: int, payload=b"", *,
             flags: int = 0, deadline: float | None = None) -> Frame:
        """Send one request and block for its reply frame."""
        if self._closed:
            raise ChannelClosed("client channel is closed")
        if self.mode.kind == MODE_SHM:
            self._doorbell.drain()
            self.segment.send_request(msg_type, request_id, payload, flags=flags)
            self._doorbell.ring()
            abs_deadline = None if deadline is None else time.monotonic() + deadline
            return self.segment.recv_response(abs_deadline, waiter=self._doorbell.wait)
        self._set_timeout(deadline)
        if isinstance(payload, (bytes, bytearray, memoryview)):
            stream_send(self.sock, Frame(msg_type, request_id, bytes(payload), flags))
        else:
            stream_send_value(self.sock, msg_type, request_id, payload, flags=flags)
        return stream_recv(self.sock, poll_window=poll_window_s())

    def send_only(self, msg_type: int, request_id: int, payload=b"", *, flags: int = 0):
        """Fire-and-forget (used for CLOSE, which has no acknowledgement)."""
        if self._closed:
            raise ChannelClosed("client channel is closed")
        if self.mode.kind == MODE_SHM:
            self.segment.send_request(msg_type, request_id, payload, flags=flags)
            self._doorbell.ring()
        else:
            self._set_timeout(5.0)
            if isinstance(payload, (bytes, bytearray, memoryview)):
                stream_send(self.sock, Frame(msg_type, request_id, bytes(payload), flags))
            else:
                stream_send_value(self.sock, msg_type, request_id, payload, flags=flags)

    def close(self):
        if self._closed:
            return
        self._closed = True
        if self.segment is not None:
            self.segment.close_channel()
            self.segment.detach()
            self.segment = None
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def client_negotiate(sock: socket.socket, address: tuple[str, int], *,
                     force_stream: bool = False, next_request_id,
                     ping_deadline: float = 2.0) -> ClientChannel:
    """Run the client half of the handshake; returns the negotiated channel.

    ``next_request_id`` is a callable yielding the session's monotonically
    increasing request ids (the handshake itself consumes ids).
    """
    sock.settimeout(HANDSHAKE_TIMEOUT)
    hello_id = next_request_id()
    stream_send_value(sock, MsgType.HELLO, hello_id, {"proto_version": PROTO_VERSION})
    ack = stream_recv(sock)
    if ack.msg_type == MsgType.ERROR:
        err = _decode_payload_map(ack)
        raise ProtocolError(str(ServerError(err.get("code", "error"), err.get("message", ""))))
    if ack.msg_type != MsgType.HELLO_ACK:
        raise ProtocolError(f"expected HELLO_ACK, got {MsgType(ack.msg_type).name}")
    params = _decode_payload_map(ack)
    shm_name = params.get("shm_name")
    capacity = params.get("shm_capacity")
    nonce = params.get("nonce")

    if not force_stream and not force_stream_env() and isinstance(shm_name, str) \
            and isinstance(nonce, bytes) and len(nonce) == shm_mod.NONCE_SIZE:
        segment = _try_shm_handshake(shm_name, nonce, next_request_id, ping_deadline)
        if segment is not None:
            mode = TransportMode(MODE_SHM, address, shm_name, capacity, nonce)
            return ClientChannel(sock, mode, segment)
    return ClientChannel(sock, TransportMode(MODE_STREAM, address), None)


def _try_shm_handshake(shm_name: str, nonce: bytes, next_request_id,
                       ping_deadline: float) -> ShmSegment | None:
    """Attach + nonce proof + confirmation ping; None means fall back."""
    try:
        segment = shm_mod.attach_segment(shm_name, expected_nonce=nonce)
    except Exception:
        return None
    try:
        segment.send_request(MsgType.PING, next_request_id())
        reply = segment.recv_response(time.monotonic() + ping_deadline)
        if reply.msg_type != MsgType.PING_ACK:
            raise ProtocolError("confirmation ping was not acknowledged")
        return segment
    except Exception:
        try:
            segment.detach()
        except Exception:
            pass
        return None
