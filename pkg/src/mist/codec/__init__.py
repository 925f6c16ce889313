"""Reversible multi-resolution codec for 2-D integer sample planes."""

from __future__ import annotations

from .codestream import Codestream, decode, encode, parse_header
from .plane import (
    DEFAULT_ALPHA,
    DEFAULT_BLOCK_SIZE,
    FULL,
    MAX_BIT_DEPTH,
    DecompositionSpec,
    PixelPlane,
    compute_rescale,
    decomposition_levels,
)
from .transform import SubbandPyramid, forward_transform, inverse_transform

__all__ = [
    "DEFAULT_ALPHA",
    "DEFAULT_BLOCK_SIZE",
    "FULL",
    "MAX_BIT_DEPTH",
    "Codestream",
    "DecompositionSpec",
    "PixelPlane",
    "SubbandPyramid",
    "compute_rescale",
    "decode",
    "decomposition_levels",
    "encode",
    "forward_transform",
    "inverse_transform",
    "parse_header",
]
