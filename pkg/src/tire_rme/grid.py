"""Fixed-size rasters and grid line-of-sight traversal.

Storage is row-major with ``x`` as the column and ``y`` as the row, origin
top-left, so ``grid.values[y, x]`` is the pixel at ``PixelCoord(x, y)``.
"""

import math
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import BoundsError, DegenerateInputError


class PixelCoord(NamedTuple):
    x: int
    y: int


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class Grid:
    """Immutable N×M raster of float64 values."""

    __slots__ = ("values",)

    def __init__(self, values):
        a = np.asarray(values, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"Grid needs a non-empty 2-D array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("Grid values must be finite")
        object.__setattr__(self, "values", _frozen(a))

    def __setattr__(self, name, value):
        raise AttributeError("Grid is immutable")

    @classmethod
    def zeros(cls, width, height):
        return cls(np.zeros((height, width)))

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    def __getitem__(self, coord):
        x, y = coord
        return float(self.values[y, x])

    def __eq__(self, other):
        return isinstance(other, Grid) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"Grid({self.width}x{self.height})"

    def flat(self):
        """Row-major copy of the values."""
        return self.values.ravel().copy()


class BinaryGrid(Grid):
    """Raster whose values are exactly 0 or 1 (building masks, transmitter maps)."""

    __slots__ = ()

    def __init__(self, values):
        a = np.asarray(values)
        if a.dtype == bool:
            a = a.astype(np.uint8)
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("BinaryGrid values must be 0 or 1")
        super().__init__(a)

    def as_bool(self):
        return self.values.astype(bool)

    def as_uint8(self):
        return self.values.astype(np.uint8)


def in_bounds(p, width, height):
    return 0 <= p[0] < width and 0 <= p[1] < height


def _check(p, width, height):
    if width is None:
        return
    if not in_bounds(p, width, height):
        raise BoundsError(f"pixel {tuple(p)} outside {width}x{height} grid")


def los_pixels(a, b, width=None, height=None):
    """Cells crossed by the open segment between pixel centres ``a`` and ``b``.

    Supercover traversal: every cell whose closed square the segment touches,
    so a segment through a cell corner reports all cells sharing that corner.
    Endpoints are excluded. Bounds are checked when a grid size is given.
    """
    if width is not None and height is None:
        height = width
    _check(a, width, height)
    _check(b, width, height)
    return [PixelCoord(x, y) for x, y in kernels.los_pixels(int(a[0]), int(a[1]), int(b[0]), int(b[1]))]


def max_normalize(g):
    """Rescale so the largest value becomes exactly 1."""
    vals = g.values if isinstance(g, Grid) else np.asarray(g, dtype=np.float64)
    m = float(np.max(vals))
    if not m > 0:
        raise DegenerateInputError(f"max_normalize needs a positive maximum, got {m}")
    out = vals / m
    # x / x is exactly 1.0 in IEEE arithmetic, but be explicit about the contract
    out[vals == m] = 1.0
    return Grid(out) if isinstance(g, Grid) else out


def euclidean_distance(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])
