"""Client mirror of the agent interface over the negotiated transport.

A client owns one session: it connects, negotiates shared memory or stream,
and exposes initialize/reset/act/close with transparent encoding. Camera
compression applies only on the stream path; shared memory carries raw
arrays.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass

from .errors import ChannelClosed, ConnectError, ProtocolError, ServerError
from .protocol.frame import FLAG_BATCHED, FLAG_COMPRESSED_IMAGES, Frame, MsgType
from .protocol.messages import (
    NO_COMPRESSION,
    Act,
    CompressionPolicy,
    Obs,
    decode_act,
    encode_obs,
    obs_has_compressed_cameras,
)
from .protocol.value import decode_value, encoded_size
from .transport import MODE_SHM, ClientChannel, client_negotiate, configure_socket

DEFAULT_CALL_DEADLINE = 30.0
PING_DEADLINE = 2.0


@dataclass
class CallStats:
    """Sizes of the most recent request/response payloads, in octets."""

    request_payload: int = 0
    response_payload: int = 0


def parse_address(addr: str | tuple) -> tuple[str, int]:
    """Accept "host:port" strings or (host, port) pairs."""
    if isinstance(addr, tuple):
        return addr[0], int(addr[1])
    host, _, port = addr.rpartition(":")
    if not host or not port:
        raise ConnectError(f"address {addr!r} is not host:port")
    return host, int(port)


class PolicyClient:
    """Synchronous remote agent: one in-flight request at a time."""

    def __init__(self, channel: ClientChannel, compression: CompressionPolicy,
                 call_deadline: float):
        self._channel = channel
        self.compression = compression if channel.mode.kind != MODE_SHM else NO_COMPRESSION
        self.call_deadline = call_deadline
        self._request_id = 0  # advanced past handshake ids by connect()
        self._lock = threading.Lock()
        self._closed = False
        self.initialized = False
        self.stats = CallStats()

    # -- connection --

    @classmethod
    def connect(cls, address, *, force_stream: bool = False, timeout: float = 10.0,
                compression: CompressionPolicy | None = None,
                call_deadline: float = DEFAULT_CALL_DEADLINE) -> "PolicyClient":
        """Dial the server, negotiate the transport and return a ready client."""
        host, port = parse_address(address)
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except (OSError, socket.timeout) as e:
            raise ConnectError(f"cannot connect to {host}:{port}: {e}") from e
        configure_socket(sock)
        counter = _Counter()
        try:
            channel = client_negotiate(sock, (host, port), force_stream=force_stream,
                                       next_request_id=counter.advance,
                                       ping_deadline=PING_DEADLINE)
        except Exception:
            sock.close()
            raise
        client = cls(channel, compression or CompressionPolicy(),
                     call_deadline=call_deadline)
        client._request_id = counter.value
        return client

    @property
    def mode(self):
        """The negotiated :class:`TransportMode`."""
        return self._channel.mode

    # -- request plumbing --

    def _next_id(self) -> int:
        self._request_id += 1
        return self._request_id

    def _call(self, msg_type: MsgType, payload, expect: MsgType, *,
              flags: int = 0, deadline: float | None = None) -> Frame:
        if self._closed:
            raise ChannelClosed("client is closed")
        with self._lock:
            reply = self._channel.call(msg_type, self._next_id(), payload,
                                       flags=flags,
                                       deadline=deadline or self.call_deadline)
        self.stats.response_payload = len(reply.payload)
        if reply.msg_type == MsgType.ERROR:
            err, _ = decode_value(reply.payload)
            if isinstance(err, dict):
                raise ServerError(str(err.get("code", "error")), str(err.get("message", "")))
            raise ServerError("error", repr(err))
        if reply.msg_type != expect:
            raise ProtocolError(f"expected {expect.name}, got {MsgType(reply.msg_type).name}")
        return reply

    # -- agent interface --

    def initialize(self) -> None:
        """Run the agent's one-time heavy setup on the server."""
        self._call(MsgType.INITIALIZE, None, MsgType.INITIALIZE_ACK)
        self.initialized = True

    def reset(self, obs: Obs, instruction=None, **kwargs) -> dict:
        """Start a new episode; returns the agent's metadata map."""
        payload = {
            "obs": encode_obs(obs, self.compression),
            "instruction": instruction,
            "kwargs": kwargs,
        }
        flags = self._obs_flags(obs, payload["obs"])
        reply = self._call(MsgType.RESET, payload, MsgType.RESET_ACK, flags=flags)
        result, _ = decode_value(reply.payload)
        return result if isinstance(result, dict) else {}

    def act(self, obs: Obs) -> Act:
        """Request one action for ``obs``."""
        encoded = encode_obs(obs, self.compression)
        self.stats.request_payload = encoded_size(encoded)
        flags = self._obs_flags(obs, encoded)
        reply = self._call(MsgType.ACT, encoded, MsgType.ACT_ACK, flags=flags)
        value, _ = decode_value(reply.payload)
        return decode_act(value, batched=obs.batched)

    def ping(self, payload: bytes = b"", deadline: float = PING_DEADLINE) -> float:
        """Round-trip a PING; returns the elapsed seconds."""
        t0 = time.perf_counter()
        reply = self._call(MsgType.PING, bytes(payload), MsgType.PING_ACK, deadline=deadline)
        if bytes(reply.payload) != bytes(payload):
            raise ProtocolError("ping reply payload does not match")
        return time.perf_counter() - t0

    def close(self) -> None:
        """Tear down the session; afterwards every call raises ChannelClosed."""
        if self._closed:
            return
        self._closed = True
        try:
            self._channel.send_only(MsgType.CLOSE, self._next_id())
        except Exception:
            pass
        self._channel.close()

    @staticmethod
    def _obs_flags(obs: Obs, encoded) -> int:
        flags = FLAG_BATCHED if obs.batched else 0
        if obs_has_compressed_cameras(encoded):
            flags |= FLAG_COMPRESSED_IMAGES
        return flags

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _Counter:
    def __init__(self):
        self.value = 0

    def advance(self) -> int:
        self.value += 1
        return self.value


def connect(address, **kwargs) -> PolicyClient:
    """Convenience alias for :meth:`PolicyClient.connect`."""
    return PolicyClient.connect(address, **kwargs)
