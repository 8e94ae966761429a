"""TCP listen endpoint that hands out per-session connections."""

from __future__ import annotations

import socket

from ..errors import BindError
from .stream import configure_socket


class ServerEndpoint:
    """A bound, listening socket; one shared-memory segment is created per
    accepted session during negotiation, not here."""

    def __init__(self, bind_address: tuple[str, int]):
        host, port = bind_address
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((host, port))
        except OSError as e:
            sock.close()
            raise BindError(f"cannot bind {host}:{port}: {e}") from e
        sock.listen(16)
        self.sock = sock
        self.address: tuple[str, int] = sock.getsockname()[:2]

    def accept(self, timeout: float | None = None) -> tuple[socket.socket, tuple[str, int]]:
        self.sock.settimeout(timeout)
        conn, peer = self.sock.accept()
        conn.settimeout(None)
        configure_socket(conn)
        return conn, peer

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass
