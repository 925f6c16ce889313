"""Sample planes, value rescaling, and decomposition sizing."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..errors import UnsupportedDepth, UnsupportedType

MAX_BIT_DEPTH = 16
DEFAULT_ALPHA = 64
DEFAULT_BLOCK_SIZE = 64

#: Sentinel accepted wherever a decomposition level is expected: decode the
#: finest (lossless) resolution, i.e. level ``n_levels + 1``.
FULL = None


def decomposition_levels(rows: int, cols: int, alpha: int = DEFAULT_ALPHA) -> int:
    """Number of dyadic decompositions for a ``rows x cols`` plane.

    Chosen so the coarsest retained approximation keeps its short side at
    least ``alpha`` samples: ``floor(log2(min(rows, cols) / alpha))``,
    clamped below at zero. Computed in exact integer arithmetic.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"plane dimensions must be positive, got {rows}x{cols}")
    if alpha < 1:
        raise ValueError(f"alpha must be positive, got {alpha}")
    shortest = min(rows, cols)
    if shortest < alpha:
        return 0
    return (shortest // alpha).bit_length() - 1


@dataclass(frozen=True)
class DecompositionSpec:
    """How a plane is decomposed and entropy coded.

    ``n_levels`` dyadic decompositions yield ``n_levels + 1`` decodable
    resolutions. ``block_size`` is the square entropy-coding block edge and
    must be a power of two.
    """

    n_levels: int
    alpha: int = DEFAULT_ALPHA
    block_size: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self):
        if self.n_levels < 0:
            raise ValueError(f"n_levels must be >= 0, got {self.n_levels}")
        if self.n_levels > 255:
            raise ValueError(f"n_levels must fit one byte, got {self.n_levels}")
        if self.alpha < 1:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        b = self.block_size
        if b < 1 or (b & (b - 1)) != 0:
            raise ValueError(f"block_size must be a power of two, got {b}")

    @classmethod
    def for_plane(
        cls,
        rows: int,
        cols: int,
        alpha: int = DEFAULT_ALPHA,
        block_size: int = DEFAULT_BLOCK_SIZE,
    ) -> "DecompositionSpec":
        """Spec with ``n_levels`` derived from the plane dimensions."""
        return cls(decomposition_levels(rows, cols, alpha), alpha, block_size)

    @property
    def n_resolutions(self) -> int:
        """Count of decodable resolutions (levels ``1 .. n_levels + 1``)."""
        return self.n_levels + 1


@dataclass(frozen=True, eq=False)
class PixelPlane:
    """One 2-D slice of unsigned samples plus the mapping back to its signal.

    ``samples`` is a read-only uint16 array of shape ``(rows, cols)`` holding
    values in ``[0, 2**bit_depth)``. The original signal value of a sample
    ``s`` is ``s * rescale_slope + rescale_intercept``.
    """

    samples: np.ndarray
    bit_depth: int
    rescale_intercept: int = 0
    rescale_slope: Fraction = field(default=Fraction(1))

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"samples must be a non-empty 2-D array, got shape {arr.shape}")
        if not (1 <= self.bit_depth <= MAX_BIT_DEPTH):
            raise ValueError(f"bit_depth must be in [1, {MAX_BIT_DEPTH}], got {self.bit_depth}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise UnsupportedType(f"samples must be integers, got dtype {arr.dtype}")
        lo, hi = int(arr.min()), int(arr.max())
        if lo < 0 or hi >= (1 << self.bit_depth):
            raise ValueError(
                f"samples [{lo}, {hi}] fall outside [0, 2**{self.bit_depth})"
            )
        stored = np.ascontiguousarray(arr, dtype=np.uint16)
        stored.setflags(write=False)
        object.__setattr__(self, "samples", stored)
        slope = Fraction(self.rescale_slope)
        if slope <= 0:
            raise ValueError(f"rescale_slope must be positive, got {slope}")
        object.__setattr__(self, "rescale_slope", slope)
        object.__setattr__(self, "rescale_intercept", int(self.rescale_intercept))

    @property
    def rows(self) -> int:
        return int(self.samples.shape[0])

    @property
    def cols(self) -> int:
        return int(self.samples.shape[1])

    def signal(self) -> np.ndarray:
        """Samples mapped back to original signal values (float64 unless the
        slope is integral, in which case int64)."""
        s = self.rescale_slope
        if s.denominator == 1:
            return self.samples.astype(np.int64) * int(s) + self.rescale_intercept
        return self.samples.astype(np.float64) * float(s) + self.rescale_intercept

    def equals(self, other: "PixelPlane") -> bool:
        """Bit-exact sample and mapping equality."""
        return (
            self.bit_depth == other.bit_depth
            and self.rescale_intercept == other.rescale_intercept
            and self.rescale_slope == other.rescale_slope
            and self.samples.shape == other.samples.shape
            and bool(np.array_equal(self.samples, other.samples))
        )


def compute_rescale(source: np.ndarray) -> PixelPlane:
    """Shift signed integer samples into unsigned storage.

    The intercept is the signal minimum when negatives are present, else 0;
    the slope stays 1, so ``stored = signal - intercept`` is lossless.
    Raises ``UnsupportedType`` for non-integer input and ``UnsupportedDepth``
    when the shifted range needs more than 16 bits.
    """
    arr = np.asarray(source)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty 2-D array, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise UnsupportedType(f"integer samples required, got dtype {arr.dtype}")
    lo, hi = int(arr.min()), int(arr.max())
    intercept = lo if lo < 0 else 0
    span = hi - intercept
    if span >= (1 << MAX_BIT_DEPTH):
        raise UnsupportedDepth(
            f"values [{lo}, {hi}] span {span + 1} counts, more than 16 bits"
        )
    stored = (arr.astype(np.int64) - intercept).astype(np.uint16)
    bit_depth = max(1, span.bit_length())
    return PixelPlane(stored, bit_depth, rescale_intercept=intercept)
