"""Policy server: hosts agents behind the wire protocol.

Each accepted session negotiates its own transport, gets a fresh agent
instance (or a dedicated connection to an external backend speaking the
same protocol) and is served by one thread. Sessions are independent; an
agent failure turns into an ERROR frame, never a dead server.
"""

from __future__ import annotations

import logging
import socket
import threading
from dataclasses import dataclass, field
from typing import Callable

from .agents import Agent
from .errors import (
    ChannelClosed,
    ConfigError,
    ConnectionLost,
    DecodingError,
    EncodingError,
    IntegrityError,
    ProtocolError,
)
from .protocol.frame import FLAG_BATCHED, Frame, MsgType
from .protocol.messages import CompressionPolicy, decode_obs, encode_act
from .protocol.value import decode_value
from .transport import (
    DEFAULT_CAPACITY,
    ServerEndpoint,
    SessionTransport,
    client_negotiate,
    configure_socket,
    server_negotiate,
)

logger = logging.getLogger("policyserve.server")

PHASE_CONNECTED = "connected"
PHASE_INITIALIZED = "initialized"
PHASE_READY = "ready"
PHASE_CLOSED = "closed"


@dataclass
class ServerConfig:
    """Configuration for :func:`serve`.

    Exactly one of ``agent_factory`` and ``backend_address`` must be set.
    ``compression`` is advisory for server-emitted image values; replies
    defined by the protocol (acks, errors) never carry images.
    """

    bind_address: tuple[str, int] = ("127.0.0.1", 0)
    agent_factory: Callable[[], Agent] | None = None
    backend_address: tuple[str, int] | None = None
    compression: CompressionPolicy = field(default_factory=CompressionPolicy)
    shm_capacity: int = DEFAULT_CAPACITY

    def validate(self):
        if (self.agent_factory is None) == (self.backend_address is None):
            raise ConfigError("exactly one of agent_factory / backend_address must be set")


def serve(config: ServerConfig) -> "Server":
    """Bind, start accepting sessions and return the running server handle."""
    config.validate()
    server = Server(config)
    server.start()
    return server


class Server:
    """Running server handle: ``address``, ``shutdown()``, ``join()``."""

    def __init__(self, config: ServerConfig):
        config.validate()
        self.config = config
        self.endpoint = ServerEndpoint(config.bind_address)
        self.address = self.endpoint.address
        self._accept_thread: threading.Thread | None = None
        self._sessions: set[_Session] = set()
        self._lock = threading.Lock()
        self._stop = threading.Event()

    def start(self):
        t = threading.Thread(target=self._accept_loop, name="policyserve-accept", daemon=True)
        self._accept_thread = t
        t.start()

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, peer = self.endpoint.accept(timeout=0.2)
            except socket.timeout:
                continue
            except OSError:
                break
            session = _Session(self, conn, peer)
            with self._lock:
                self._sessions.add(session)
            session.thread.start()

    def _forget(self, session: "_Session"):
        with self._lock:
            self._sessions.discard(session)

    def shutdown(self):
        """Stop accepting, signal all sessions and wait for their threads."""
        self._stop.set()
        self.endpoint.close()
        with self._lock:
            sessions = list(self._sessions)
        for s in sessions:
            s.signal_close()
        for s in sessions:
            s.thread.join(timeout=5.0)
            if s.thread.is_alive():
                s.close()  # stuck thread: reclaim resources from here
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5.0)

    def join(self):
        if self._accept_thread is not None:
            self._accept_thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


class _Session:
    """One client session: transport, lifecycle phase and agent instance."""

    def __init__(self, server: Server, conn: socket.socket, peer):
        self.server = server
        self.conn = conn
        self.peer = peer
        self.transport: SessionTransport | None = None
        self.phase = PHASE_CONNECTED
        self.agent: Agent | None = None
        self.backend = None  # ClientChannel when delegating
        self._backend_ids = iter(range(1, 1 << 62))
        self.last_request_id = 0
        self._close_lock = threading.Lock()
        self._closed = False
        self.thread = threading.Thread(target=self._run, name=f"policyserve-session-{peer}",
                                       daemon=True)

    # -- lifecycle --

    def _run(self):
        try:
            if self.server.config.backend_address is not None:
                if not self._connect_backend():
                    return
            self.transport = server_negotiate(self.conn, self.server.config.shm_capacity)
            self.last_request_id = 1  # HELLO consumed id 1
            if self.server.config.agent_factory is not None:
                self.agent = self.server.config.agent_factory()
            self._serve_loop()
        except (ProtocolError, ConnectionLost, ChannelClosed) as e:
            logger.debug("session %s ended during negotiation: %s", self.peer, e)
        except Exception:
            logger.exception("session %s crashed", self.peer)
        finally:
            self.close()
            self.server._forget(self)

    def _connect_backend(self) -> bool:
        """Open this session's dedicated backend connection before HELLO_ACK."""
        try:
            addr = self.server.config.backend_address
            sock = socket.create_connection(addr, timeout=10.0)
            configure_socket(sock)
            self.backend = client_negotiate(
                sock, addr, force_stream=True,
                next_request_id=lambda: next(self._backend_ids))
            return True
        except Exception as e:
            logger.warning("backend unavailable for session %s: %s", self.peer, e)
            self._refuse_with_error("backend_unavailable", str(e))
            return False

    def _refuse_with_error(self, code: str, message: str):
        # The client is still waiting for HELLO_ACK; answer its HELLO with
        # an ERROR frame instead, then drop the connection.
        try:
            from .transport.stream import stream_recv, stream_send_value

            self.conn.settimeout(5.0)
            hello = stream_recv(self.conn)
            stream_send_value(self.conn, MsgType.ERROR, hello.request_id,
                              {"code": code, "message": message})
        except Exception:
            pass
        finally:
            try:
                self.conn.close()
            except OSError:
                pass

    def _serve_loop(self):
        while True:
            try:
                frame = self.transport.recv_request()
            except IntegrityError as e:
                # the frame was fully consumed, the stream is still in sync
                self._reply_error(getattr(e, "request_id", 0), "integrity_error", str(e))
                continue
            except (ProtocolError, DecodingError) as e:
                # framing is lost; report and drop the session
                self._reply_error(0, "decode_failure", str(e))
                return
            if frame is None or frame.msg_type == MsgType.CLOSE:
                if frame is not None and self.backend is not None:
                    try:
                        self.backend.send_only(MsgType.CLOSE, next(self._backend_ids))
                    except Exception:
                        pass
                return
            self._handle(frame)
            frame = None  # release any payload view into the segment

    def _handle(self, frame: Frame):
        rid = frame.request_id
        if rid <= self.last_request_id:
            self._reply_error(rid, "bad_request_id",
                              f"request id {rid} is not greater than {self.last_request_id}")
            return
        self.last_request_id = rid
        if frame.msg_type == MsgType.PING:
            # Health checks are always answered locally, even when delegating.
            payload = bytes(frame.payload)
            self.transport.send_response(MsgType.PING_ACK, rid, payload, flags=frame.flags)
            return
        if self.backend is not None:
            self._delegate(frame)
        else:
            self._dispatch(frame)

    # -- local dispatch --

    def _dispatch(self, frame: Frame):
        rid = frame.request_id
        handler = {
            MsgType.INITIALIZE: self._on_initialize,
            MsgType.RESET: self._on_reset,
            MsgType.ACT: self._on_act,
        }.get(frame.msg_type)
        if handler is None:
            self._reply_error(rid, "bad_message",
                              f"{MsgType(frame.msg_type).name} is not a request")
            return
        try:
            handler(frame)
        except (DecodingError, EncodingError) as e:
            self._reply_error(rid, "decode_failure", str(e))
        except _PhaseError as e:
            self._reply_error(rid, "bad_phase", str(e))
        except Exception as e:
            logger.debug("agent failure in session %s", self.peer, exc_info=True)
            self._reply_error(rid, "agent_failure", f"{type(e).__name__}: {e}")

    def _require_phase(self, *allowed: str):
        if self.phase not in allowed:
            raise _PhaseError(f"not allowed in phase {self.phase!r}")

    def _on_initialize(self, frame: Frame):
        self._require_phase(PHASE_CONNECTED)
        self.agent.initialize()
        self.phase = PHASE_INITIALIZED
        self.transport.send_response(MsgType.INITIALIZE_ACK, frame.request_id, None)

    def _on_reset(self, frame: Frame):
        self._require_phase(PHASE_INITIALIZED, PHASE_READY)
        params, _ = decode_value(frame.payload)
        if not isinstance(params, dict) or "obs" not in params:
            raise DecodingError("RESET payload must be a map with an 'obs' entry")
        obs = decode_obs(params["obs"], batched=frame.batched)
        kwargs = params.get("kwargs", {})
        if not isinstance(kwargs, dict):
            raise DecodingError("RESET 'kwargs' must be a map")
        result = self.agent.reset(obs, params.get("instruction"), **kwargs)
        if result is None:
            result = {}
        if not isinstance(result, dict):
            raise TypeError(f"reset must return a map, got {type(result).__name__}")
        self.phase = PHASE_READY
        self.transport.send_response(MsgType.RESET_ACK, frame.request_id, result)

    def _on_act(self, frame: Frame):
        self._require_phase(PHASE_READY)
        value, _ = decode_value(frame.payload)
        obs = decode_obs(value, batched=frame.batched)
        act = self.agent.act(obs)
        batch = obs.batch_size
        if frame.batched and batch is not None and act.action.shape[0] != batch:
            raise TypeError(f"agent returned batch {act.action.shape[0]}, request had {batch}")
        flags = FLAG_BATCHED if frame.batched else 0
        self.transport.send_response(MsgType.ACT_ACK, frame.request_id,
                                     encode_act(act, batched=frame.batched), flags=flags)

    # -- backend delegation --

    def _delegate(self, frame: Frame):
        """Forward the frame verbatim on the session's backend connection,
        remapping the request id; payloads are relayed untouched."""
        rid = frame.request_id
        try:
            reply = self.backend.call(frame.msg_type, next(self._backend_ids),
                                      bytes(frame.payload), flags=frame.flags,
                                      deadline=60.0)
        except Exception as e:
            self._reply_error(rid, "backend_lost", f"{type(e).__name__}: {e}")
            return
        self.transport.send_response(reply.msg_type, rid, reply.payload, flags=reply.flags)

    def _reply_error(self, rid: int, code: str, message: str):
        # ERROR frames are control frames: request id echoed, flags always 0
        try:
            self.transport.send_response(MsgType.ERROR, rid,
                                         {"code": code, "message": message})
        except Exception:
            logger.debug("could not deliver ERROR %s to %s", code, self.peer, exc_info=True)

    def signal_close(self):
        """Ask the session thread to exit (callable from any thread)."""
        if self.transport is not None:
            self.transport.signal_close()
        else:
            try:
                self.conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass

    def close(self):
        with self._close_lock:
            if self._closed:
                return
            self._closed = True
        self.phase = PHASE_CLOSED
        if self.backend is not None:
            try:
                self.backend.close()
            except Exception:
                pass
        if self.transport is not None:
            self.transport.close()
        else:
            try:
                self.conn.close()
            except OSError:
                pass


class _PhaseError(Exception):
    pass
