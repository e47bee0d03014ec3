"""Region-overlap and boundary metrics for binary masks.

Conventions:

* ``dice``: 1.0 when both masks are empty, 0.0 when exactly one is.
* ``hausdorff`` / ``hd95``: computed over foreground pixel centers; when
  either mask is empty there is no distance to measure, so both return the
  image diagonal as a worst-case sentinel.
* ``hce_estimate``: an estimate of the number of editor interactions needed
  to fix the disagreement between two masks (polygon vertices per error
  region, plus two tool interactions per region).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .boundary import error_components, simplify_closed, trace_outer_boundary
from .mask import BinaryMask

__all__ = [
    "MetricRecord",
    "BoxplotStats",
    "dice",
    "hausdorff",
    "hd95",
    "hce_estimate",
    "improvement_pct",
    "boxplot_stats",
]

DEFAULT_HCE_TOLERANCE_PX = 2.0
DEFAULT_HCE_MIN_REGION_PX = 10


@dataclass(frozen=True)
class MetricRecord:
    """Per-image metric bundle produced by evaluation."""

    dice: float
    hd: float
    hd95: float
    hce: int


@dataclass(frozen=True)
class BoxplotStats:
    """Five-number summary with 1.5*IQR whiskers."""

    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]


def _check_dims(pred: BinaryMask, gt: BinaryMask) -> None:
    if pred.dims != gt.dims:
        raise ValueError(f"mask dims differ: {pred.dims} vs {gt.dims}")


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    """Dice overlap coefficient, 2|A&B| / (|A|+|B|)."""
    _check_dims(pred, gt)
    p = pred.count
    g = gt.count
    if p == 0 and g == 0:
        return 1.0
    if p == 0 or g == 0:
        return 0.0
    inter = int(np.logical_and(pred.data, gt.data).sum())
    return 2.0 * inter / (p + g)


def _foreground_points(mask: BinaryMask) -> np.ndarray:
    ys, xs = np.nonzero(mask.data)
    return np.column_stack((xs, ys)).astype(np.float64)


def _directed_distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Distance from each point in src to its nearest neighbor in dst."""
    tree = cKDTree(dst)
    dists, _ = tree.query(src, k=1)
    return np.asarray(dists, dtype=np.float64)


def hausdorff(pred: BinaryMask, gt: BinaryMask) -> float:
    """Symmetric Hausdorff distance between foregrounds, in pixels.

    Lower is better. Returns the image diagonal when either mask is empty.
    """
    _check_dims(pred, gt)
    if pred.is_empty or gt.is_empty:
        return pred.dims.diagonal
    a = _foreground_points(pred)
    b = _foreground_points(gt)
    fwd = _directed_distances(a, b).max()
    bwd = _directed_distances(b, a).max()
    return float(max(fwd, bwd))


def hd95(pred: BinaryMask, gt: BinaryMask) -> float:
    """95th-percentile Hausdorff distance (max over both directions).

    Percentile uses linear interpolation between closest ranks. Returns the
    image diagonal when either mask is empty.
    """
    _check_dims(pred, gt)
    if pred.is_empty or gt.is_empty:
        return pred.dims.diagonal
    a = _foreground_points(pred)
    b = _foreground_points(gt)
    fwd = np.percentile(_directed_distances(a, b), 95)
    bwd = np.percentile(_directed_distances(b, a), 95)
    return float(max(fwd, bwd))


def hce_estimate(
    pred: BinaryMask,
    gt: BinaryMask,
    tolerance_px: float = DEFAULT_HCE_TOLERANCE_PX,
    min_region_px: int = DEFAULT_HCE_MIN_REGION_PX,
) -> int:
    """Estimated click count to correct ``pred`` into ``gt``.

    The disagreement (XOR) is split into 8-connected regions; regions below
    ``min_region_px`` are ignored as noise a human would not bother with.
    Each remaining region costs one polygon vertex per corner that survives
    simplification at ``tolerance_px``, plus two interactions for tool and
    label selection.
    """
    _check_dims(pred, gt)
    error = pred ^ gt
    if error.is_empty:
        return 0
    clicks = 0
    for component in error_components(error.data, min_region_px):
        ring = trace_outer_boundary(component)
        vertices = simplify_closed(ring, tolerance_px)
        clicks += len(vertices) + 2
    return clicks


def improvement_pct(raw: float, filtered: float) -> float:
    """Relative change from raw to filtered as a percentage.

    Returns NaN when the raw value is zero (relative change is undefined).
    """
    if raw == 0:
        return math.nan
    return 100.0 * (filtered - raw) / raw


def boxplot_stats(values: Sequence[float]) -> BoxplotStats:
    """Five-number summary used for distribution plots.

    Quartiles use linear interpolation; whiskers extend to the most extreme
    data points within 1.5*IQR of the quartiles; everything beyond those is
    reported as an outlier.
    """
    if len(values) == 0:
        raise ValueError("boxplot_stats requires at least one value")
    arr = np.asarray(values, dtype=np.float64)
    q1, med, q3 = (float(q) for q in np.percentile(arr, [25, 50, 75]))
    iqr = q3 - q1
    low_fence = q1 - 1.5 * iqr
    high_fence = q3 + 1.5 * iqr
    inside = arr[(arr >= low_fence) & (arr <= high_fence)]
    # Fences always bracket the quartiles, so inside is never empty.
    whisker_low = float(inside.min())
    whisker_high = float(inside.max())
    outliers = tuple(float(v) for v in arr[(arr < low_fence) | (arr > high_fence)])
    return BoxplotStats(
        median=med,
        q1=q1,
        q3=q3,
        whisker_low=whisker_low,
        whisker_high=whisker_high,
        outliers=outliers,
    )
