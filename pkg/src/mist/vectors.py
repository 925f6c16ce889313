"""Shared codec conformance vectors.

Each case directory contains the encoded codestream plus, for every level,
the expected decoded samples as raw little-endian uint16 (C order) and a
JSON description with prefix lengths and content digests. Independent
decoder implementations consume these to prove bit-exact agreement.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .codec import PixelPlane, decode, encode
from .offsets import build_offset_table

_SEED = 90210


def _bandlimited(rng: np.random.Generator, size: int, cutoff: int = 12) -> np.ndarray:
    spectrum = np.zeros((size, size // 2 + 1), dtype=np.complex128)
    block = rng.normal(size=(cutoff, cutoff)) + 1j * rng.normal(size=(cutoff, cutoff))
    spectrum[:cutoff, :cutoff] = block
    field = np.fft.irfft2(spectrum, s=(size, size))
    field -= field.min()
    if field.max() > 0:
        field /= field.max()
    return np.round(field * 3000).astype(np.uint16)


def default_planes() -> list[tuple[str, PixelPlane]]:
    """A deterministic mix of shapes, depths, and rescale mappings."""
    rng = np.random.default_rng(_SEED)
    ramp = (np.add.outer(np.arange(37), np.arange(53)) * 40 % 4096).astype(np.uint16)
    blob_y, blob_x = np.mgrid[0:96, 0:128]
    blob = np.round(
        4000 * np.exp(-(((blob_y - 48) / 20.0) ** 2 + ((blob_x - 64) / 30.0) ** 2))
    ).astype(np.uint16)
    speckle = rng.integers(0, 65536, size=(100, 100), dtype=np.uint16)
    cases = [
        ("constant_1x1", PixelPlane(np.array([[513]], dtype=np.uint16), 12)),
        ("constant_64x64", PixelPlane(np.full((64, 64), 777, dtype=np.uint16), 10)),
        ("ramp_37x53", PixelPlane(ramp, 12)),
        ("blob_128x96", PixelPlane(blob, 12)),
        ("speckle_100x100", PixelPlane(speckle, 16)),
        (
            "smooth_512x512_ct",
            PixelPlane(
                _bandlimited(rng, 512),
                12,
                rescale_intercept=-1024,
                rescale_slope=Fraction(1),
            ),
        ),
        (
            "odd_65x33",
            PixelPlane(rng.integers(0, 256, size=(65, 33), dtype=np.uint16), 8),
        ),
    ]
    return cases


def export_vectors(destination: str | Path) -> list[Path]:
    """Write every conformance case under ``destination``; returns case dirs."""
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)
    written = []
    for number, (name, plane) in enumerate(default_planes()):
        case_dir = destination / f"case_{number:03d}"
        case_dir.mkdir(exist_ok=True)
        stream = encode(plane)
        (case_dir / "stream.mistcs").write_bytes(stream.data)
        table = build_offset_table(stream)

        levels = []
        for level in range(1, stream.header.n_levels + 2):
            decoded = decode(stream.data, level=level)
            blob = decoded.samples.astype("<u2").tobytes()
            file_name = f"level_{level}.u16"
            (case_dir / file_name).write_bytes(blob)
            levels.append(
                {
                    "level": level,
                    "rows": decoded.rows,
                    "cols": decoded.cols,
                    "file": file_name,
                    "prefix_length": table.prefix_length(level),
                    "sha256": hashlib.sha256(blob).hexdigest(),
                }
            )
        description = {
            "name": name,
            "rows": plane.rows,
            "cols": plane.cols,
            "bit_depth": plane.bit_depth,
            "n_levels": stream.header.n_levels,
            "rescale_intercept": plane.rescale_intercept,
            "rescale_slope": [
                plane.rescale_slope.numerator,
                plane.rescale_slope.denominator,
            ],
            "stream_length": len(stream.data),
            "levels": levels,
        }
        (case_dir / "expected.json").write_text(
            json.dumps(description, indent=2) + "\n"
        )
        written.append(case_dir)
    return written
