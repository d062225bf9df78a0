# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled line-of-sight kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline long floordiv(long a, long b) nogil:
    # b > 0
    cdef long q = a / b
    if (a % b != 0) and (a < 0):
        q -= 1
    return q


cdef inline void column_span(long c, long x0, long y0, long dx, long dy,
                             long *rmin, long *rmax) nogil:
    cdef long xl = 2 * c - 1
    cdef long xr = 2 * c + 1
    cdef long nl, nr, lo, hi
    if xl < 2 * x0:
        xl = 2 * x0
    if xr > 2 * (x0 + dx):
        xr = 2 * (x0 + dx)
    nl = 2 * y0 * dx + dy * (xl - 2 * x0)
    nr = 2 * y0 * dx + dy * (xr - 2 * x0)
    if nl <= nr:
        lo = nl
        hi = nr
    else:
        lo = nr
        hi = nl
    rmin[0] = -floordiv(dx - lo, 2 * dx)
    rmax[0] = floordiv(hi + dx, 2 * dx)


def los_pixels(long ax, long ay, long bx, long by):
    """Supercover traversal from (ax, ay) to (bx, by), endpoints excluded."""
    cdef long dx, dy, c, r, rmin, rmax, t
    cdef bint flip
    out = []
    if ax == bx and ay == by:
        return out
    flip = ax > bx or (ax == bx and ay > by)
    if flip:
        t = ax; ax = bx; bx = t
        t = ay; ay = by; by = t
    dx = bx - ax
    dy = by - ay
    if dx == 0:
        for r in range(ay + 1, by):
            out.append((ax, r))
    else:
        for c in range(ax, bx + 1):
            column_span(c, ax, ay, dx, dy, &rmin, &rmax)
            if dy >= 0:
                r = rmin
                while r <= rmax:
                    if not ((c == ax and r == ay) or (c == bx and r == by)):
                        out.append((c, r))
                    r += 1
            else:
                r = rmax
                while r >= rmin:
                    if not ((c == ax and r == ay) or (c == bx and r == by)):
                        out.append((c, r))
                    r -= 1
    if flip:
        out.reverse()
    return out


cdef void count_one(const unsigned char[:, ::1] b, long ax, long ay, long bx, long by,
                    long *nfree, long *ntotal) nogil:
    cdef long dx, dy, c, r, rmin, rmax, t
    nfree[0] = 0
    ntotal[0] = 0
    if ax == bx and ay == by:
        return
    if ax > bx or (ax == bx and ay > by):
        t = ax; ax = bx; bx = t
        t = ay; ay = by; by = t
    dx = bx - ax
    dy = by - ay
    if dx == 0:
        for r in range(ay + 1, by):
            ntotal[0] += 1
            if b[r, ax] == 0:
                nfree[0] += 1
        return
    for c in range(ax, bx + 1):
        column_span(c, ax, ay, dx, dy, &rmin, &rmax)
        for r in range(rmin, rmax + 1):
            if (c == ax and r == ay) or (c == bx and r == by):
                continue
            ntotal[0] += 1
            if b[r, c] == 0:
                nfree[0] += 1


def los_counts(buildings, long tx, long ty):
    """For every target pixel: (#non-building LOS pixels, #LOS pixels) towards (tx, ty)."""
    cdef const unsigned char[:, ::1] b = np.ascontiguousarray(buildings, dtype=np.uint8)
    cdef long h = b.shape[0]
    cdef long w = b.shape[1]
    free = np.zeros((h, w), dtype=np.int64)
    total = np.zeros((h, w), dtype=np.int64)
    cdef long long[:, ::1] fv = free
    cdef long long[:, ::1] tv = total
    cdef long x, y, nf, nt
    with nogil:
        for y in range(h):
            for x in range(w):
                count_one(b, x, y, tx, ty, &nf, &nt)
                fv[y, x] = nf
                tv[y, x] = nt
    return free, total
