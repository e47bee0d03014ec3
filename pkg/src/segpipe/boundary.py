"""Boundary tracing and polygon simplification for click-cost estimation.

Boundaries are traced through pixel centers (Moore neighborhood, clockwise)
and simplified with Ramer-Douglas-Peucker under a perpendicular-distance
tolerance. Closed rings are anchored at a far-apart point pair before
simplification so that, e.g., an axis-aligned rectangle collapses to exactly
its four corners.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

# Clockwise Moore neighborhood as (dy, dx), starting north.
_MOORE = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)

Point = tuple[float, float]


def error_components(error: np.ndarray, min_region_px: int) -> list[np.ndarray]:
    """8-connected components of a boolean raster with at least min_region_px pixels.

    Each component is returned as its own full-size boolean array.
    """
    labels, n = ndimage.label(error, structure=_EIGHT_CONNECTED)
    comps = []
    for k in range(1, n + 1):
        comp = labels == k
        if int(comp.sum()) >= min_region_px:
            comps.append(comp)
    return comps


def trace_outer_boundary(component: np.ndarray) -> list[Point]:
    """Ordered (x, y) pixel centers along the outer boundary of one component.

    Single-pixel components yield a one-point polygon. The trace may revisit
    pixels on one-pixel-wide appendages; termination follows Jacob's
    criterion (re-entering the start pixel from the starting direction).
    """
    ys, xs = np.nonzero(component)
    if ys.size == 0:
        return []
    # Topmost-then-leftmost foreground pixel (np.nonzero scans row-major);
    # its N and W neighbors are guaranteed background.
    start = (int(ys[0]), int(xs[0]))

    padded = np.zeros((component.shape[0] + 2, component.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = component
    sy, sx = start[0] + 1, start[1] + 1

    def next_on_boundary(py: int, px: int, enter_dir: int) -> tuple[int, int, int] | None:
        # Scan clockwise starting just after the backtrack direction.
        back = (enter_dir + 4) % 8
        for step in range(1, 9):
            d = (back + step) % 8
            ny, nx = py + _MOORE[d][0], px + _MOORE[d][1]
            if padded[ny, nx]:
                return ny, nx, d
        return None

    # Entering direction for the start pixel: pretend we arrived moving east
    # from its (background) west neighbor.
    first = next_on_boundary(sy, sx, 2)
    if first is None:
        return [(float(start[1]), float(start[0]))]

    boundary: list[Point] = [(float(sx - 1), float(sy - 1))]
    py, px, d = first
    stop = (py, px, d)
    limit = 4 * int(component.sum()) + 8
    steps = 0
    while steps < limit:
        boundary.append((float(px - 1), float(py - 1)))
        nxt = next_on_boundary(py, px, d)
        if nxt is None:
            break
        py, px, d = nxt
        if (py, px, d) == stop:
            break
        steps += 1
    # The ring closes back at the start pixel; drop the duplicate tail point.
    if len(boundary) > 1 and boundary[-1] == boundary[0]:
        boundary.pop()
    return boundary


def _perpendicular_distance(p: Point, a: Point, b: Point) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return math.hypot(px - ax, py - ay)
    return abs(dx * (ay - py) - (ax - px) * dy) / norm


def rdp(points: list[Point], epsilon: float) -> list[Point]:
    """Ramer-Douglas-Peucker on an open chain; endpoints always survive."""
    n = len(points)
    if n <= 2:
        return list(points)
    keep = [False] * n
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        lo, hi = stack.pop()
        dmax = 0.0
        imax = lo
        for i in range(lo + 1, hi):
            d = _perpendicular_distance(points[i], points[lo], points[hi])
            if d > dmax:
                dmax = d
                imax = i
        if dmax > epsilon:
            keep[imax] = True
            stack.append((lo, imax))
            stack.append((imax, hi))
    return [p for p, k in zip(points, keep) if k]


def simplify_closed(points: list[Point], epsilon: float) -> list[Point]:
    """Simplify a closed ring of points, returning its surviving vertices.

    The ring is split at two mutually far points (farthest from points[0],
    then farthest from that) and each half is simplified independently, so
    anchor placement never injects mid-edge vertices on simple shapes.
    """
    n = len(points)
    if n <= 3:
        return list(points)
    arr = np.asarray(points, dtype=float)

    d0 = np.hypot(arr[:, 0] - arr[0, 0], arr[:, 1] - arr[0, 1])
    a = int(np.argmax(d0))
    da = np.hypot(arr[:, 0] - arr[a, 0], arr[:, 1] - arr[a, 1])
    b = int(np.argmax(da))
    if a == b:
        return rdp(points, epsilon)
    i, j = min(a, b), max(a, b)
    chain1 = points[i : j + 1]
    chain2 = points[j:] + points[: i + 1]
    out = rdp(chain1, epsilon)[:-1] + rdp(chain2, epsilon)[:-1]
    return out
