"""Connection-aware transports: framed TCP and same-host shared memory."""

from .endpoint import ServerEndpoint
from .session import (
    MODE_SHM,
    MODE_STREAM,
    ClientChannel,
    SessionTransport,
    TransportMode,
    client_negotiate,
    force_stream_env,
    server_negotiate,
)
from .shm import (
    DEFAULT_CAPACITY,
    MIN_CAPACITY,
    SHM_MAGIC,
    ShmSegment,
    attach_segment,
    create_segment,
)
from .stream import configure_socket, stream_recv, stream_send, stream_send_value

__all__ = [
    "ServerEndpoint",
    "MODE_SHM",
    "MODE_STREAM",
    "ClientChannel",
    "SessionTransport",
    "TransportMode",
    "client_negotiate",
    "force_stream_env",
    "server_negotiate",
    "DEFAULT_CAPACITY",
    "MIN_CAPACITY",
    "SHM_MAGIC",
    "ShmSegment",
    "attach_segment",
    "create_segment",
    "configure_socket",
    "stream_recv",
    "stream_send",
    "stream_send_value",
]
