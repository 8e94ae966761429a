"""Exception types raised across the protocol, transport and serving layers."""

from __future__ import annotations


class PolicyServeError(Exception):
    """Base class for all errors raised by this package."""


class EncodingError(PolicyServeError):
    """A value cannot be represented in the wire format."""


class DecodingError(PolicyServeError):
    """Input octets do not form a valid encoded value.

    ``offset`` is the input position at which decoding failed.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class ProtocolError(PolicyServeError):
    """A frame or message violates the protocol (bad magic, version, type...)."""


class IntegrityError(PolicyServeError):
    """Frame checksum mismatch: the payload was corrupted in transit."""


class FrameTooLarge(PolicyServeError):
    """Payload exceeds the configured maximum frame size."""


class ConfigError(PolicyServeError):
    """Invalid configuration value."""


class BindError(PolicyServeError):
    """The server could not bind its listen address."""


class ConnectError(PolicyServeError):
    """The client could not establish a connection."""


class ConnectionLost(PolicyServeError):
    """The peer closed or reset the connection mid-stream."""


class ChannelClosed(PolicyServeError):
    """The channel was closed; no further requests are possible."""


class TimeoutError(PolicyServeError, TimeoutError):
    """A call did not complete within its deadline."""


class ServerError(PolicyServeError):
    """An ERROR frame returned by the server, carrying its code and message."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message


class EpisodeError(PolicyServeError):
    """An environment or policy failure aborted an episode.

    ``stats`` holds the partial episode statistics collected before the abort.
    """

    def __init__(self, message: str, stats=None):
        super().__init__(message)
        self.stats = stats
