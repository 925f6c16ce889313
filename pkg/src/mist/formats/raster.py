"""Grayscale raster (PNG) reading and writing via Pillow.

Only single-channel integer images are ingested; color, palette, and float
images are excluded. Output is 8-bit or 16-bit grayscale PNG depending on
the stored bit depth.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from ..codec import PixelPlane, compute_rescale
from ..errors import Excluded, ExclusionReason, MistError, exclusion_for
from .metadata import DecodedSeries, FormatKind, MetadataDocument

_GRAY_MODES = {"1", "L", "I", "I;16", "I;16B", "I;16L", "I;16N"}


def read_raster(path: str | Path) -> DecodedSeries:
    """Read one grayscale image as a single-slice series."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            mode = img.mode
            if mode not in _GRAY_MODES:
                if mode in ("F",):
                    raise Excluded(ExclusionReason.UNSUPPORTED_TYPE, "floating point samples")
                raise Excluded(
                    ExclusionReason.UNSUPPORTED_TYPE, f"{mode} images are not grayscale"
                )
            arr = np.asarray(img)
    except Excluded:
        raise
    except Exception as err:
        raise Excluded(ExclusionReason.UNSUPPORTED_TYPE, f"unreadable image: {err}") from err

    if arr.ndim != 2:
        raise Excluded(ExclusionReason.UNSUPPORTED_TYPE, f"{arr.ndim}-channel pixel array")
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    try:
        plane = compute_rescale(arr)
    except MistError as err:
        raise exclusion_for(err) from err

    tags = {
        "series_id": path.stem,
        "rows": plane.rows,
        "cols": plane.cols,
        "num_slices": 1,
        "bits_stored": plane.bit_depth,
        "source_tags": {},
    }
    return DecodedSeries(MetadataDocument(FormatKind.RASTER, tags), [plane])


def write_png_bytes(plane: PixelPlane) -> bytes:
    """Serialise one plane as an 8-bit or 16-bit grayscale PNG."""
    size = (plane.cols, plane.rows)
    if plane.bit_depth <= 8:
        img = Image.frombytes("L", size, plane.samples.astype(np.uint8).tobytes())
    else:
        img = Image.frombytes("I;16", size, plane.samples.astype("<u2").tobytes())
    out = io.BytesIO()
    img.save(out, format="PNG")
    return out.getvalue()
