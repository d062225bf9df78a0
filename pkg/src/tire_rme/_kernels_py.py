"""Pure-Python line-of-sight kernels. Reference path and fallback for ``_kernels``."""

import numpy as np


def _column_rows(c, x0, y0, dx, dy):
    # Rows of column c touched by the closed segment, in doubled coordinates
    # scaled by dx so that everything stays integral.
    xl = max(2 * c - 1, 2 * x0)
    xr = min(2 * c + 1, 2 * (x0 + dx))
    nl = 2 * y0 * dx + dy * (xl - 2 * x0)
    nr = 2 * y0 * dx + dy * (xr - 2 * x0)
    lo, hi = (nl, nr) if nl <= nr else (nr, nl)
    rmin = -((dx - lo) // (2 * dx))
    rmax = (hi + dx) // (2 * dx)
    if dy >= 0:
        return range(rmin, rmax + 1)
    return range(rmax, rmin - 1, -1)


def los_pixels(ax, ay, bx, by):
    """Supercover traversal from (ax, ay) to (bx, by), endpoints excluded."""
    if ax == bx and ay == by:
        return []
    flip = ax > bx or (ax == bx and ay > by)
    if flip:
        ax, ay, bx, by = bx, by, ax, ay
    dx = bx - ax
    dy = by - ay
    out = []
    if dx == 0:
        for y in range(ay + 1, by):
            out.append((ax, y))
    else:
        for c in range(ax, bx + 1):
            for r in _column_rows(c, ax, ay, dx, dy):
                if (c == ax and r == ay) or (c == bx and r == by):
                    continue
                out.append((c, r))
    if flip:
        out.reverse()
    return out


def los_counts(buildings, tx, ty):
    """For every target pixel: (#non-building LOS pixels, #LOS pixels) towards (tx, ty)."""
    h, w = buildings.shape
    free = np.zeros((h, w), dtype=np.int64)
    total = np.zeros((h, w), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            n = 0
            nf = 0
            for c, r in los_pixels(x, y, tx, ty):
                n += 1
                if not buildings[r, c]:
                    nf += 1
            free[y, x] = nf
            total[y, x] = n
    return free, total
