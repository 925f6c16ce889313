"""Exception taxonomy for the client SDK."""

from __future__ import annotations


class ClientError(Exception):
    """Base class for every error this SDK raises deliberately."""


class ProtocolError(ClientError):
    """The server's response does not match the protocol schema."""


class CorruptStream(ProtocolError):
    """A fetched codestream carries malformed structure or markers."""


class TruncatedPrefix(CorruptStream):
    """A fetched byte prefix ends before the requested level is covered."""


class LevelOutOfRange(ClientError):
    """The requested resolution level does not exist for this series."""


class NotFound(ClientError):
    """The server has no such series or slice."""
