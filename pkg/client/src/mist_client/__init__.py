"""Client SDK for progressive medical image stores.

Connect with :class:`MistClient`, enumerate series, and fetch any slice at
any resolution level — the client downloads only the codestream prefix that
level needs and decodes it locally.
"""

from .client import (
    DatasetItem,
    FetchedSlice,
    MistClient,
    RemoteSeries,
    SeriesSummary,
    iter_dataset,
)
from .codestream import DecodedSlice, StreamHeader, decode_prefix, parse_header
from .errors import (
    ClientError,
    CorruptStream,
    LevelOutOfRange,
    NotFound,
    ProtocolError,
    TruncatedPrefix,
)

__all__ = [
    "ClientError",
    "CorruptStream",
    "DatasetItem",
    "DecodedSlice",
    "FetchedSlice",
    "LevelOutOfRange",
    "MistClient",
    "NotFound",
    "ProtocolError",
    "RemoteSeries",
    "SeriesSummary",
    "StreamHeader",
    "TruncatedPrefix",
    "decode_prefix",
    "iter_dataset",
    "parse_header",
]

__version__ = "0.1.0"
