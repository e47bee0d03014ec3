import csv
import xml.etree.ElementTree as ET

import pytest

from segpipe.analysis import (
    comparison_table,
    cost_report,
    recommend_threshold,
    scatter_report,
    write_boxplot_svg,
    write_scatter_csv,
    write_scatter_svg,
)
from segpipe.backends import MockHandler, OracleSegmenter, SyntheticDetector, gt_from_scenario
from segpipe.data_io import ingest, read_mask
from segpipe.geometry import BBox, ImageDims
from segpipe.metrics import boxplot_stats
from segpipe.pipeline import ClassSpec, PipelineConfig, annotate_dataset, evaluate_run
from segpipe.protocol import InProcessBackend
from segpipe.synthetic import build_scenario, generate_dataset

CLS = ClassSpec(class_name="lesion", prompt="target patch")


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """One filtered and one raw run over the same 8-image dataset."""
    tmp_path = tmp_path_factory.mktemp("analysis")
    scenario = build_scenario(seed=17, n_images=8)
    root = generate_dataset(scenario, tmp_path / "ds")
    index = ingest(root / "images", root / "masks")

    def factory():
        det = InProcessBackend(MockHandler(detector=SyntheticDetector(scenario)))
        seg = InProcessBackend(
            MockHandler(segmenter=OracleSegmenter(gt_from_scenario(scenario)))
        )
        return det, seg

    filtered = annotate_dataset(
        index,
        PipelineConfig(classes=(CLS,), max_relative_area=0.12),
        tmp_path / "filtered",
        factory,
    )
    raw = annotate_dataset(
        index,
        PipelineConfig(classes=(CLS,), filter_enabled=False),
        tmp_path / "raw",
        factory,
    )
    return scenario, index, filtered, raw, tmp_path


class TestScatterReport:
    def test_rows_cover_all_raw_detections(self, runs):
        scenario, index, filtered, raw, tmp = runs
        report = scatter_report(filtered)
        assert len(report.rows) == sum(r.n_raw for r in filtered.records)
        assert report.max_relative_area == 0.12
        for row in report.rows:
            assert 0.0 <= row.relative_area <= 1.0 + 1e-9
            assert 0.0 <= row.confidence <= 1.0

    def test_kept_flag_matches_run_partition(self, runs):
        scenario, index, filtered, raw, tmp = runs
        report = scatter_report(filtered)
        kept_rows = sum(1 for r in report.rows if r.kept)
        assert kept_rows == sum(r.n_kept for r in filtered.records)

    def test_candidate_threshold_on_raw_run(self, runs):
        scenario, index, filtered, raw, tmp = runs
        # Analyzing the unfiltered run under a candidate threshold recovers
        # the same keep decisions the filtered run actually made.
        report = scatter_report(raw, max_relative_area=0.12)
        kept_rows = sum(1 for r in report.rows if r.kept)
        assert kept_rows == sum(r.n_kept for r in filtered.records)

    def test_gt_band(self, runs):
        scenario, index, filtered, raw, tmp = runs
        gt_boxes = {}
        for item in index:
            bbox = read_mask(item.gt_path).bbox()
            gt_boxes[item.image_id] = (bbox,)
        report = scatter_report(filtered, gt_boxes)
        lo, hi = report.gt_area_band
        assert 0.0 < lo <= hi < 0.12

    def test_csv_and_svg_outputs(self, runs, tmp_path):
        scenario, index, filtered, raw, tmp = runs
        gt_boxes = {item.image_id: (read_mask(item.gt_path).bbox(),) for item in index}
        report = scatter_report(filtered, gt_boxes)
        csv_path = tmp_path / "scatter.csv"
        svg_path = tmp_path / "scatter.svg"
        write_scatter_csv(csv_path, report)
        write_scatter_svg(svg_path, report)
        with open(csv_path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["image_id", "relative_area", "confidence", "kept"]
        assert len(rows) == len(report.rows) + 1
        root = ET.parse(svg_path).getroot()
        assert root.tag.endswith("svg")
        circles = [el for el in root.iter() if el.tag.endswith("circle")]
        assert len(circles) == len(report.rows)


class TestRecommendThreshold:
    def test_formula(self):
        dims = ImageDims(100, 100)
        sample = [(BBox(0, 0, 20, 20), dims), (BBox(0, 0, 40, 20), dims)]
        # Largest rel area 0.08, margin 1.25 -> 0.1.
        assert recommend_threshold(sample) == pytest.approx(0.1)
        assert recommend_threshold(sample, margin=2.0) == pytest.approx(0.16)

    def test_capped_at_one(self):
        dims = ImageDims(10, 10)
        assert recommend_threshold([(BBox(0, 0, 10, 10), dims)], margin=3.0) == 1.0

    def test_validation(self):
        dims = ImageDims(10, 10)
        with pytest.raises(ValueError):
            recommend_threshold([])
        with pytest.raises(ValueError):
            recommend_threshold([(BBox(0, 0, 5, 5), dims)], margin=0.5)

    def test_monotone_in_margin_and_sample(self, rng):
        dims = ImageDims(200, 200)
        sample = []
        last = 0.0
        for _ in range(20):
            x0, y0 = rng.uniform(0, 100), rng.uniform(0, 100)
            sample.append((BBox(x0, y0, x0 + rng.uniform(1, 100), y0 + rng.uniform(1, 100)), dims))
            t = recommend_threshold(sample)
            assert t >= last  # growing the sample never lowers the recommendation
            last = t
        assert recommend_threshold(sample, 1.5) >= recommend_threshold(sample, 1.25)


class TestComparisonTable:
    def test_columns_and_improvements(self, runs):
        scenario, index, filtered, raw, tmp = runs
        table = comparison_table(
            evaluate_run(raw, index), evaluate_run(filtered, index), rel_area_threshold=0.12
        )
        assert table.n_images == 8
        raw_dice = table.columns["raw"]["dice"]
        flt_dice = table.columns["filtered"]["dice"]
        assert flt_dice > raw_dice
        expected = 100.0 * (flt_dice - raw_dice) / raw_dice
        assert table.improvement_dice_filtered_pct == pytest.approx(expected)
        # Oracle-backed filtered runs have no zero-dice records to drop.
        assert table.n_selected_excluded == 0
        assert table.columns["selected"] == table.columns["filtered"]

    def test_mismatched_runs_rejected(self, runs, tmp_path):
        scenario, index, filtered, raw, tmp = runs
        full = evaluate_run(filtered, index)
        partial_records = full.records[1:]
        from segpipe.pipeline import EvalReport

        partial = EvalReport(
            records=partial_records, rows=full.rows[1:], skipped=(), means=full.means
        )
        with pytest.raises(ValueError):
            comparison_table(partial, full)

    def test_text_and_csv_render(self, runs, tmp_path):
        scenario, index, filtered, raw, tmp = runs
        table = comparison_table(
            evaluate_run(raw, index), evaluate_run(filtered, index), rel_area_threshold=0.12
        )
        text = table.as_text()
        assert "raw" in text and "filtered" in text and "selected" in text
        assert "dice" in text
        path = tmp_path / "table.csv"
        table.write_csv(path)
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["metric", "raw", "filtered", "selected"]
        assert rows[1][0] == "dice"
        assert float(rows[1][2]) == pytest.approx(table.columns["filtered"]["dice"])


class TestCostReport:
    def test_reduction_against_scratch(self, runs):
        scenario, index, filtered, raw, tmp = runs
        report = evaluate_run(filtered, index)
        gt_masks = {item.image_id: read_mask(item.gt_path) for item in index}
        cost = cost_report(report.records, gt_masks)
        assert cost.mean_hce_from_scratch > 0
        assert cost.mean_hce_with_pipeline < cost.mean_hce_from_scratch
        assert 0 < cost.reduction_pct <= 100
        assert cost.minutes_from_scratch is None

    def test_time_conversion(self, runs):
        scenario, index, filtered, raw, tmp = runs
        report = evaluate_run(filtered, index)
        gt_masks = {item.image_id: read_mask(item.gt_path) for item in index}
        cost = cost_report(report.records, gt_masks, clicks_per_minute=20.0)
        assert cost.minutes_from_scratch == pytest.approx(cost.mean_hce_from_scratch / 20.0)
        assert "minutes/image" in cost.as_text()
        with pytest.raises(ValueError):
            cost_report(report.records, gt_masks, clicks_per_minute=0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            cost_report([], {})


class TestBoxplotSvg:
    def test_renders_series(self, tmp_path, rng):
        series = [
            ("raw", boxplot_stats([rng.random() * 0.4 for _ in range(30)])),
            ("filtered", boxplot_stats([0.6 + rng.random() * 0.4 for _ in range(30)])),
        ]
        path = tmp_path / "box.svg"
        write_boxplot_svg(path, series)
        root = ET.parse(path).getroot()
        texts = [el.text for el in root.iter() if el.tag.endswith("text")]
        assert "raw" in texts and "filtered" in texts

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_boxplot_svg(tmp_path / "box.svg", [])
