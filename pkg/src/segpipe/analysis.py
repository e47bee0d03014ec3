"""Analytical reports over run manifests and evaluations.

Covers the diagnostics used to pick and justify an area threshold: the
relative-area-versus-confidence scatter with a ground-truth area band, the
raw/filtered/selected comparison table, distribution boxplots, and the
annotation-cost estimate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .geometry import BBox, ImageDims, relative_area
from .mask import BinaryMask
from .metrics import BoxplotStats, hce_estimate, improvement_pct
from .pipeline import AnnotationRecord, EvalReport, RunManifest, select_view

__all__ = [
    "ScatterRow",
    "ScatterReport",
    "scatter_report",
    "write_scatter_csv",
    "write_scatter_svg",
    "recommend_threshold",
    "ComparisonTable",
    "comparison_table",
    "CostReport",
    "cost_report",
    "write_boxplot_svg",
]

DEFAULT_MARGIN = 1.25


# --------------------------------------------------------------------------
# Scatter: relative area vs confidence


@dataclass(frozen=True)
class ScatterRow:
    image_id: str
    relative_area: float
    confidence: float
    kept: bool


@dataclass(frozen=True)
class ScatterReport:
    rows: tuple[ScatterRow, ...]
    gt_area_band: tuple[float, float] | None
    max_relative_area: float | None


def scatter_report(
    manifest: RunManifest,
    gt_boxes: Mapping[str, Sequence[BBox]] | None = None,
    max_relative_area: float | None = None,
) -> ScatterReport:
    """One row per raw detection, classified by the area filter.

    The kept flag is recomputed from the threshold (argument, falling back
    to the manifest config), so a raw-run manifest can be analyzed under a
    candidate threshold. The ground-truth band is the (min, max) relative
    area over the supplied gt boxes.
    """
    threshold = max_relative_area
    if threshold is None:
        threshold = manifest.config.max_relative_area
    rows = []
    for record in manifest.records:
        dims = record.dims
        confidence_passed = {
            _entry_key(e) for e in record.detections_kept
        } | {_entry_key(e) for e in record.detections_rejected_area}
        for entry in record.detections_raw:
            box = BBox(*entry["box_px"])
            rel = relative_area(box, dims)
            in_conf = _entry_key(entry) in confidence_passed
            kept = in_conf and (threshold is None or rel <= threshold)
            rows.append(
                ScatterRow(
                    image_id=record.image_id,
                    relative_area=rel,
                    confidence=entry["confidence"],
                    kept=kept,
                )
            )
    band = None
    if gt_boxes:
        rels = []
        for record in manifest.records:
            for box in gt_boxes.get(record.image_id, ()):
                rels.append(relative_area(box, record.dims))
        if rels:
            band = (min(rels), max(rels))
    return ScatterReport(rows=tuple(rows), gt_area_band=band, max_relative_area=threshold)


def _entry_key(entry: Mapping) -> tuple:
    return (tuple(entry["box_norm"]), entry["confidence"], entry["phrase"])


def write_scatter_csv(path: str | Path, report: ScatterReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "relative_area", "confidence", "kept"])
        for r in report.rows:
            writer.writerow([r.image_id, r.relative_area, r.confidence, str(r.kept).lower()])


def _svg_header(width: int, height: int) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]


def write_scatter_svg(path: str | Path, report: ScatterReport, title: str = "relative area vs confidence") -> None:
    """Minimal diagnostic scatter: x = relative area, y = confidence.

    The gt band is a vertical strip; the threshold a dashed line; kept
    detections are filled, rejected hollow.
    """
    w, h, m = 640, 440, 50
    px = lambda rel: m + rel * (w - 2 * m)
    py = lambda conf: h - m - conf * (h - 2 * m)
    parts = _svg_header(w, h)
    if report.gt_area_band is not None:
        lo, hi = report.gt_area_band
        parts.append(
            f'<rect x="{px(lo):.1f}" y="{py(1.0):.1f}" width="{max(px(hi) - px(lo), 1.0):.1f}" '
            f'height="{py(0.0) - py(1.0):.1f}" fill="#7cb342" fill-opacity="0.25"/>'
        )
    if report.max_relative_area is not None:
        x = px(report.max_relative_area)
        parts.append(
            f'<line x1="{x:.1f}" y1="{py(0.0):.1f}" x2="{x:.1f}" y2="{py(1.0):.1f}" '
            f'stroke="#555" stroke-dasharray="6,4"/>'
        )
    parts.append(
        f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>'
        f'<line x1="{m}" y1="{h - m}" x2="{m}" y2="{m}" stroke="black"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{px(frac):.1f}" y="{h - m + 18}" font-size="11" text-anchor="middle">{frac:g}</text>'
        )
        parts.append(
            f'<text x="{m - 8}" y="{py(frac) + 4:.1f}" font-size="11" text-anchor="end">{frac:g}</text>'
        )
    parts.append(
        f'<text x="{w / 2:.0f}" y="{h - 12}" font-size="12" text-anchor="middle">relative area</text>'
    )
    parts.append(
        f'<text x="16" y="{h / 2:.0f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {h / 2:.0f})">confidence</text>'
    )
    parts.append(f'<text x="{w / 2:.0f}" y="24" font-size="13" text-anchor="middle">{title}</text>')
    for r in report.rows:
        cx, cy = px(min(r.relative_area, 1.0)), py(min(max(r.confidence, 0.0), 1.0))
        if r.kept:
            parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="3" fill="#1565c0"/>')
        else:
            parts.append(
                f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="3" fill="none" stroke="#c62828"/>'
            )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Threshold recommendation


def recommend_threshold(
    gt_sample: Sequence[tuple[BBox, ImageDims]], margin: float = DEFAULT_MARGIN
) -> float:
    """Area threshold from a sample of ground-truth boxes.

    The largest observed gt relative area times a safety margin, capped at
    1.0. Monotone in both the margin and the sample maximum.
    """
    if not gt_sample:
        raise ValueError("recommend_threshold needs at least one gt box")
    if margin < 1.0:
        raise ValueError(f"margin must be >= 1, got {margin}")
    peak = max(relative_area(box, dims) for box, dims in gt_sample)
    return min(1.0, margin * peak)


# --------------------------------------------------------------------------
# Raw / filtered / selected comparison


@dataclass(frozen=True)
class ComparisonTable:
    rel_area_threshold: float | None
    columns: dict
    improvement_dice_filtered_pct: float
    improvement_dice_selected_pct: float
    n_images: int
    n_selected_excluded: int

    def as_text(self) -> str:
        cols = ("raw", "filtered", "selected")
        lines = [f"{'metric':<8}" + "".join(f"{c:>12}" for c in cols)]
        for metric in ("dice", "hd", "hd95"):
            vals = "".join(f"{self.columns[c][metric]:>12.4f}" for c in cols)
            lines.append(f"{metric:<8}{vals}")
        lines.append(f"{'n':<8}" + "".join(f"{self.columns[c]['count']:>12d}" for c in cols))
        if self.rel_area_threshold is not None:
            lines.append(f"rel-area threshold: {self.rel_area_threshold:g}")
        lines.append(
            "dice improvement vs raw: "
            f"filtered {self.improvement_dice_filtered_pct:+.2f}%, "
            f"selected {self.improvement_dice_selected_pct:+.2f}% "
            f"({self.n_selected_excluded} zero-dice record(s) excluded)"
        )
        return "\n".join(lines)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["metric", "raw", "filtered", "selected"])
            for metric in ("dice", "hd", "hd95", "count"):
                writer.writerow(
                    [metric] + [self.columns[c][metric] for c in ("raw", "filtered", "selected")]
                )
            writer.writerow(
                ["dice_improvement_pct", "", self.improvement_dice_filtered_pct, self.improvement_dice_selected_pct]
            )


def _mean_metrics(records: Sequence[AnnotationRecord]) -> dict:
    if not records:
        return {"dice": math.nan, "hd": math.nan, "hd95": math.nan, "count": 0}
    n = len(records)
    assert all(r.metrics is not None for r in records)
    return {
        "dice": sum(r.metrics.dice for r in records) / n,  # type: ignore[union-attr]
        "hd": sum(r.metrics.hd for r in records) / n,  # type: ignore[union-attr]
        "hd95": sum(r.metrics.hd95 for r in records) / n,  # type: ignore[union-attr]
        "count": n,
    }


def comparison_table(
    raw_eval: EvalReport,
    filtered_eval: EvalReport,
    rel_area_threshold: float | None = None,
) -> ComparisonTable:
    """Raw vs filtered vs selected means over the same image set.

    All three columns come from one aggregation helper; the selected column
    is literally the filtered records after select_view.
    """
    raw_keys = sorted((r.image_id, r.class_name) for r in raw_eval.records)
    flt_keys = sorted((r.image_id, r.class_name) for r in filtered_eval.records)
    if raw_keys != flt_keys:
        raise ValueError(
            f"evaluations cover different records: {len(raw_keys)} raw vs {len(flt_keys)} filtered"
        )
    selected, excluded = select_view(filtered_eval.records)
    columns = {
        "raw": _mean_metrics(raw_eval.records),
        "filtered": _mean_metrics(filtered_eval.records),
        "selected": _mean_metrics(selected),
    }
    return ComparisonTable(
        rel_area_threshold=rel_area_threshold,
        columns=columns,
        improvement_dice_filtered_pct=improvement_pct(columns["raw"]["dice"], columns["filtered"]["dice"]),
        improvement_dice_selected_pct=improvement_pct(columns["raw"]["dice"], columns["selected"]["dice"]),
        n_images=len(raw_keys),
        n_selected_excluded=excluded,
    )


# --------------------------------------------------------------------------
# Annotation cost


@dataclass(frozen=True)
class CostReport:
    mean_hce_from_scratch: float
    mean_hce_with_pipeline: float
    reduction_pct: float
    minutes_from_scratch: float | None
    minutes_with_pipeline: float | None

    def as_text(self) -> str:
        lines = [
            f"mean clicks, from scratch:  {self.mean_hce_from_scratch:.1f}",
            f"mean clicks, with pipeline: {self.mean_hce_with_pipeline:.1f}",
            f"correction-effort reduction: {self.reduction_pct:.1f}%",
        ]
        if self.minutes_from_scratch is not None and self.minutes_with_pipeline is not None:
            lines.append(
                f"est. minutes/image: {self.minutes_from_scratch:.2f} -> {self.minutes_with_pipeline:.2f}"
            )
        return "\n".join(lines)


def cost_report(
    eval_records: Sequence[AnnotationRecord],
    gt_masks: Mapping[str, BinaryMask],
    clicks_per_minute: float | None = None,
) -> CostReport:
    """Correction effort with the pipeline vs annotating from scratch.

    From-scratch cost is the click estimate for turning an empty mask into
    the ground truth. Time figures appear only when a clicks-per-minute
    rate is supplied; the estimator has no intrinsic time unit.
    """
    if not eval_records:
        raise ValueError("cost_report needs at least one evaluated record")
    scratch_total = 0
    pipeline_total = 0
    for record in eval_records:
        if record.metrics is None:
            raise ValueError(f"record {record.image_id}/{record.class_name} has no metrics")
        gt = gt_masks[record.image_id]
        scratch_total += hce_estimate(BinaryMask.empty(gt.dims), gt)
        pipeline_total += record.metrics.hce
    n = len(eval_records)
    mean_scratch = scratch_total / n
    mean_pipeline = pipeline_total / n
    # Sign inverted relative to improvement: lower cost is the win.
    reduction = -improvement_pct(mean_scratch, mean_pipeline) if mean_scratch else math.nan
    minutes_scratch = minutes_pipeline = None
    if clicks_per_minute is not None:
        if clicks_per_minute <= 0:
            raise ValueError("clicks_per_minute must be positive")
        minutes_scratch = mean_scratch / clicks_per_minute
        minutes_pipeline = mean_pipeline / clicks_per_minute
    return CostReport(
        mean_hce_from_scratch=mean_scratch,
        mean_hce_with_pipeline=mean_pipeline,
        reduction_pct=reduction,
        minutes_from_scratch=minutes_scratch,
        minutes_with_pipeline=minutes_pipeline,
    )


# --------------------------------------------------------------------------
# Boxplots


def write_boxplot_svg(path: str | Path, labeled: Sequence[tuple[str, BoxplotStats]]) -> None:
    """Side-by-side vertical boxplots on a fixed [0, 1] value axis."""
    if not labeled:
        raise ValueError("no boxplot series")
    w, h, m = 120 + 110 * len(labeled), 440, 50
    py = lambda v: h - m - min(max(v, 0.0), 1.0) * (h - 2 * m)
    parts = _svg_header(w, h)
    parts.append(f'<line x1="{m}" y1="{h - m}" x2="{m}" y2="{m}" stroke="black"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{m - 8}" y="{py(frac) + 4:.1f}" font-size="11" text-anchor="end">{frac:g}</text>'
        )
    for i, (label, stats) in enumerate(labeled):
        cx = m + 70 + 110 * i
        half = 32
        parts.append(
            f'<line x1="{cx}" y1="{py(stats.whisker_low):.1f}" x2="{cx}" y2="{py(stats.q1):.1f}" stroke="black"/>'
        )
        parts.append(
            f'<line x1="{cx}" y1="{py(stats.q3):.1f}" x2="{cx}" y2="{py(stats.whisker_high):.1f}" stroke="black"/>'
        )
        for v in (stats.whisker_low, stats.whisker_high):
            parts.append(
                f'<line x1="{cx - half // 2}" y1="{py(v):.1f}" x2="{cx + half // 2}" y2="{py(v):.1f}" stroke="black"/>'
            )
        parts.append(
            f'<rect x="{cx - half}" y="{py(stats.q3):.1f}" width="{2 * half}" '
            f'height="{max(py(stats.q1) - py(stats.q3), 1.0):.1f}" fill="#90caf9" stroke="black"/>'
        )
        parts.append(
            f'<line x1="{cx - half}" y1="{py(stats.median):.1f}" x2="{cx + half}" y2="{py(stats.median):.1f}" '
            f'stroke="black" stroke-width="2"/>'
        )
        for v in stats.outliers:
            parts.append(f'<circle cx="{cx}" cy="{py(v):.1f}" r="3" fill="none" stroke="#c62828"/>')
        parts.append(
            f'<text x="{cx}" y="{h - m + 18}" font-size="12" text-anchor="middle">{label}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
