"""Single-slot shared-memory rendezvous channel.

Segment layout (all integers little-endian):

====== ===== =====================================================
offset size  field
====== ===== =====================================================
0      8     magic ``VLAGSHM1``
8      16    session nonce
24     4     state (0 IDLE, 1 REQUEST_READY, 2 PROCESSING,
             3 RESPONSE_READY, 4 CLOSED)
28     8     request id
36     1     message type
37     2     flags
39     1     reserved (0)
40     4     payload length
44     ...   payload region (capacity - 44 octets)
====== ===== =====================================================

The state word is the only cross-process synchronization point. The client
owns the segment in IDLE and RESPONSE_READY, the server in REQUEST_READY and
PROCESSING; each side writes the header and payload only while it owns the
slot and flips the state last, so on x86's total-store-order the peer always
observes a fully written message once the state change is visible. Waiting
is a bounded busy-spin followed by brief sleeps, tunable via
``POLICYSERVE_SPIN_US``.
"""

from __future__ import annotations

import os
import secrets
import struct
import time
import uuid
from multiprocessing import resource_tracker, shared_memory

from ..errors import ChannelClosed, ConfigError, FrameTooLarge
from ..errors import TimeoutError as DeadlineError
from ..protocol.frame import Frame, MsgType
from ..protocol.value import encode_into, encoded_size

SHM_MAGIC = b"VLAGSHM1"
HEADER_SIZE = 44
NONCE_SIZE = 16
MIN_CAPACITY = 1 << 20  # 1 MiB
DEFAULT_CAPACITY = 8 << 20  # 8 MiB

STATE_IDLE = 0
STATE_REQUEST_READY = 1
STATE_PROCESSING = 2
STATE_RESPONSE_READY = 3
STATE_CLOSED = 4

_STATE = struct.Struct("<I")
_MSG_HEADER = struct.Struct("<QBHBI")  # request_id, msg_type, flags, reserved, payload_len

DEFAULT_SPIN_US = 50.0
# After the spin budget, sleep(0) yields stay accurate to tens of us; past
# the yield window the wait defers to ``waiter`` (the session layer blocks
# on a socket doorbell there) or to brief sleeps.
_YIELD_WINDOW_S = 2e-3
_SLEEP_S = 100e-6  # late-phase sleep quantum

# Names created by this process; attaching to one of these must not touch the
# resource tracker (Python < 3.13 registers attachments as if they were
# creations, and unregistering would orphan the creator's entry).
_created_names: set[str] = set()


def _spin_budget_s() -> float:
    raw = os.environ.get("POLICYSERVE_SPIN_US", "")
    try:
        return float(raw) * 1e-6 if raw else DEFAULT_SPIN_US * 1e-6
    except ValueError:
        return DEFAULT_SPIN_US * 1e-6


def make_segment_name(prefix: str = "policyserve") -> str:
    return f"{prefix}-{uuid.uuid4().hex}"


def create_segment(name: str | None = None, capacity: int = DEFAULT_CAPACITY) -> "ShmSegment":
    """Create and initialize a fresh rendezvous segment (server side)."""
    if capacity < MIN_CAPACITY:
        raise ConfigError(f"shm capacity must be >= {MIN_CAPACITY} octets, got {capacity}")
    name = name or make_segment_name()
    mem = shared_memory.SharedMemory(name=name, create=True, size=capacity)
    _created_names.add(mem.name.lstrip("/"))
    nonce = secrets.token_bytes(NONCE_SIZE)
    mem.buf[0:8] = SHM_MAGIC
    mem.buf[8:24] = nonce
    _STATE.pack_into(mem.buf, 24, STATE_IDLE)
    return ShmSegment(mem, owner=True)


def attach_segment(name: str, expected_nonce: bytes | None = None) -> "ShmSegment":
    """Attach an existing segment by name (client side).

    Raises FileNotFoundError when the segment does not exist and ValueError
    when its magic or nonce does not match; callers treat either as "fall
    back to the stream transport".
    """
    mem = shared_memory.SharedMemory(name=name)
    # Python < 3.13 registers attached segments with the resource tracker,
    # which would unlink them when this process exits; the server owns the
    # segment lifecycle, so untrack our mapping (unless we are the creator).
    if mem.name.lstrip("/") not in _created_names:
        try:
            resource_tracker.unregister(mem._name, "shared_memory")  # noqa: SLF001
        except Exception:
            pass
    seg = ShmSegment(mem, owner=False)
    if bytes(mem.buf[0:8]) != SHM_MAGIC:
        seg.detach()
        raise ValueError("segment magic mismatch")
    if expected_nonce is not None and bytes(mem.buf[8:24]) != expected_nonce:
        seg.detach()
        raise ValueError("segment nonce mismatch")
    return seg


class ShmSegment:
    """One mapped rendezvous segment plus send/receive primitives."""

    def __init__(self, mem: shared_memory.SharedMemory, owner: bool):
        self.mem = mem
        self.owner = owner
        self.buf = mem.buf
        self.capacity = mem.size
        self.max_payload = self.capacity - HEADER_SIZE
        self._open = True

    @property
    def name(self) -> str:
        return self.mem.name.lstrip("/")

    @property
    def nonce(self) -> bytes:
        return bytes(self.buf[8:24])

    # -- state word --

    def state(self) -> int:
        return _STATE.unpack_from(self.buf, 24)[0]

    def set_state(self, state: int):
        _STATE.pack_into(self.buf, 24, state)

    def await_state(self, target: int, deadline: float | None = None,
                    poll=None, waiter=None) -> int:
        """Wait until the state equals ``target``.

        Strategy: bounded busy-spin, then scheduler yields, then either
        ``waiter(max_wait_s)`` (a real blocking wait on the session's
        doorbell socket) or brief sleeps. ``deadline`` is an absolute
        ``time.monotonic()`` instant (None waits forever). ``poll``, when
        given, is invoked between post-spin waits and may raise to abort
        (peer-liveness checks). CLOSED is surfaced as ChannelClosed
        regardless of ``target``.
        """
        unpack, buf = _STATE.unpack_from, self.buf
        state = unpack(buf, 24)[0]
        if state == target:
            return state
        start = time.monotonic()
        spin_until = start + _spin_budget_s()
        yield_until = start + _YIELD_WINDOW_S
        while True:
            state = unpack(buf, 24)[0]
            if state == target:
                return state
            if state == STATE_CLOSED:
                raise ChannelClosed("shared-memory channel is closed")
            now = time.monotonic()
            if deadline is not None and now >= deadline:
                raise DeadlineError(f"no transition to state {target} within deadline")
            if now < spin_until:
                continue
            if poll is not None:
                poll()
            if now < yield_until:
                time.sleep(0)  # yields the core but wakes fast
            elif waiter is not None:
                budget = None if deadline is None else deadline - now
                waiter(0.05 if budget is None else max(0.0, min(0.05, budget)))
            else:
                time.sleep(_SLEEP_S)

    # -- messages --

    def _write_message(self, msg_type: int, flags: int, request_id: int, payload) -> None:
        if isinstance(payload, (bytes, bytearray, memoryview)):
            n = len(payload)
            if n > self.max_payload:
                raise FrameTooLarge(f"payload of {n} octets exceeds segment capacity ({self.max_payload})")
            _MSG_HEADER.pack_into(self.buf, 28, request_id, msg_type, flags, 0, n)
            if n:
                self.buf[HEADER_SIZE : HEADER_SIZE + n] = payload
        else:  # a protocol value: encode straight into the payload region
            n = encoded_size(payload)
            if n > self.max_payload:
                raise FrameTooLarge(f"payload of {n} octets exceeds segment capacity ({self.max_payload})")
            _MSG_HEADER.pack_into(self.buf, 28, request_id, msg_type, flags, 0, n)
            encode_into(payload, self.buf, HEADER_SIZE)

    def _read_message(self, copy: bool = True) -> Frame:
        request_id, msg_type, flags, _, n = _MSG_HEADER.unpack_from(self.buf, 28)
        view = self.buf[HEADER_SIZE : HEADER_SIZE + n]
        payload = bytes(view) if copy else view
        return Frame(msg_type=MsgType(msg_type), request_id=request_id, payload=payload, flags=flags)

    def send_request(self, msg_type: int, request_id: int, payload=b"", *, flags: int = 0):
        """Client: publish a request. Requires the IDLE state (client-owned)."""
        if not self._open:
            raise ChannelClosed("segment is detached")
        state = self.state()
        if state == STATE_CLOSED:
            raise ChannelClosed("shared-memory channel is closed")
        if state != STATE_IDLE:
            raise ChannelClosed(f"cannot send in state {state}")
        self._write_message(msg_type, flags, request_id, payload)
        self.set_state(STATE_REQUEST_READY)

    def recv_response(self, deadline: float | None = None, poll=None,
                      waiter=None) -> Frame:
        """Client: wait for RESPONSE_READY, read the reply, release the slot."""
        self.await_state(STATE_RESPONSE_READY, deadline, poll, waiter)
        frame = self._read_message()
        self.set_state(STATE_IDLE)
        return frame

    def recv_request(self, deadline: float | None = None, poll=None,
                     copy: bool = True, waiter=None) -> Frame:
        """Server: wait for REQUEST_READY and take ownership (PROCESSING).

        With ``copy=False`` the payload is a view into the segment, read in
        place with no staging copy; it stays valid while the server owns the
        slot, i.e. until ``send_response`` overwrites the region.
        """
        self.await_state(STATE_REQUEST_READY, deadline, poll, waiter)
        self.set_state(STATE_PROCESSING)
        return self._read_message(copy)

    def send_response(self, msg_type: int, request_id: int, payload=b"", *, flags: int = 0):
        """Server: publish the response for the request being processed."""
        if not self._open:
            raise ChannelClosed("segment is detached")
        if self.state() != STATE_PROCESSING:
            raise ChannelClosed(f"cannot respond in state {self.state()}")
        self._write_message(msg_type, flags, request_id, payload)
        self.set_state(STATE_RESPONSE_READY)

    # -- lifecycle --

    def close_channel(self):
        """Mark the channel CLOSED for both sides (idempotent)."""
        if self._open:
            try:
                self.set_state(STATE_CLOSED)
            except (ValueError, TypeError):  # buffer already released
                pass

    def detach(self):
        """Release this process's mapping (and unlink if this side created it)."""
        if not self._open:
            return
        self._open = False
        self.buf = None
        try:
            self.mem.close()
        except Exception:
            pass
        if self.owner:
            try:
                self.mem.unlink()
            except FileNotFoundError:
                pass
            _created_names.discard(self.mem.name.lstrip("/"))
