"""Independent reference implementations used to cross-check the package.

Everything here is deliberately naive: plain Python loops over pixel
coordinates, full pairwise distance scans, hand-rolled percentile
interpolation. No scipy, no shared helpers with the code under test.
"""

from __future__ import annotations

import math


def mask_pixels(data) -> set[tuple[int, int]]:
    """Foreground coordinates as a set of (x, y) tuples."""
    pixels = set()
    for y, row in enumerate(data):
        for x, v in enumerate(row):
            if v:
                pixels.add((x, y))
    return pixels


def naive_rle_counts(data) -> list[int]:
    """Column-major run lengths, alternating starting with background."""
    h = len(data)
    w = len(data[0]) if h else 0
    flat = [bool(data[y][x]) for x in range(w) for y in range(h)]
    counts: list[int] = []
    expect = False
    i = 0
    while i < len(flat):
        j = i
        while j < len(flat) and flat[j] == flat[i]:
            j += 1
        if flat[i] != expect:
            counts.append(0)
            expect = flat[i]
        counts.append(j - i)
        expect = not expect
        i = j
    return counts


def naive_rle_decode(size, counts) -> list[list[bool]]:
    h, w = size
    flat: list[bool] = []
    value = False
    for run in counts:
        flat.extend([value] * run)
        value = not value
    if len(flat) != h * w:
        raise ValueError("counts do not cover the mask")
    grid = [[False] * w for _ in range(h)]
    for i, v in enumerate(flat):
        x, y = divmod(i, h)
        grid[y][x] = v
    return grid


def naive_dice(a_pixels: set, b_pixels: set) -> float:
    if not a_pixels and not b_pixels:
        return 1.0
    if not a_pixels or not b_pixels:
        return 0.0
    inter = len(a_pixels & b_pixels)
    return 2.0 * inter / (len(a_pixels) + len(b_pixels))


def naive_directed_distances(src: set, dst: set) -> list[float]:
    """min-distance from every src point to dst, full pairwise scan."""
    out = []
    for p in src:
        out.append(min(math.dist(p, q) for q in dst))
    return out


def naive_percentile(values, q: float) -> float:
    """Linear interpolation between closest ranks, like numpy's default."""
    s = sorted(values)
    if not s:
        raise ValueError("no values")
    rank = (len(s) - 1) * q / 100.0
    lo = math.floor(rank)
    hi = math.ceil(rank)
    if lo == hi:
        return float(s[lo])
    frac = rank - lo
    return float(s[lo] + frac * (s[hi] - s[lo]))


def naive_hausdorff(a_pixels: set, b_pixels: set, sentinel: float) -> float:
    if not a_pixels or not b_pixels:
        return sentinel
    fwd = max(naive_directed_distances(a_pixels, b_pixels))
    bwd = max(naive_directed_distances(b_pixels, a_pixels))
    return max(fwd, bwd)


def naive_hd95(a_pixels: set, b_pixels: set, sentinel: float) -> float:
    if not a_pixels or not b_pixels:
        return sentinel
    fwd = naive_percentile(naive_directed_distances(a_pixels, b_pixels), 95.0)
    bwd = naive_percentile(naive_directed_distances(b_pixels, a_pixels), 95.0)
    return max(fwd, bwd)
