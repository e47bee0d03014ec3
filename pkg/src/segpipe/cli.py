"""Command-line entry point for the annotation workflow.

Exit status: 0 on success, 1 on partial failures (failed images, failed
conformance checks, skipped evaluations), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analysis
from .backends import (
    BoxFillSegmenter,
    FixtureDetector,
    MockHandler,
    OracleSegmenter,
    ProceduralSyntheticDetector,
    SyntheticDetector,
    gt_from_dir,
    gt_from_scenario,
    gt_from_seed,
)
from .conformance import run_conformance
from .data_io import (
    CocoEntry,
    coco_json_bytes,
    export_coco,
    ingest,
    read_mask,
    write_metrics_csv,
)
from .mask import rle_encode
from .metrics import boxplot_stats
from .pipeline import (
    BackendFactory,
    ClassSpec,
    PipelineConfig,
    RunManifest,
    annotate_dataset,
    evaluate_run,
    load_config,
    select_view,
)
from .protocol import BackendClient, ProtocolError, serve_loop
from .synthetic import SyntheticScenario, build_scenario, generate_dataset

__all__ = ["main"]

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


class _UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segpipe",
        description="Prompt-driven detect/filter/segment annotation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="annotate a dataset into masks plus a run manifest")
    p.add_argument("images_dir", nargs="?", help="directory of input images")
    _add_config_flags(p)
    p.add_argument("--out", help="output directory for masks and manifest")
    p.set_defaults(fn=_cmd_annotate)

    p = sub.add_parser("evaluate", help="compute metrics for a run against ground truth")
    p.add_argument("manifest", help="manifest.json from an annotate run")
    p.add_argument("--gt-dir", required=True, help="directory of ground-truth masks")
    p.add_argument("--images-dir", help="override the images directory recorded in the manifest")
    p.add_argument("--out", help="metrics CSV path (default: metrics.csv beside the manifest)")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("analyze", help="scatter, comparison table, boxplots and cost reports")
    p.add_argument("manifest", help="manifest.json of the (filtered) run")
    p.add_argument("--compare", help="manifest.json of a raw (--no-filter) run to compare against")
    p.add_argument("--gt-dir", help="ground-truth masks; enables table, boxplots and cost report")
    p.add_argument("--images-dir", help="override the images directory recorded in the manifest")
    p.add_argument("--max-rel-area", type=float, help="threshold for scatter classification")
    p.add_argument("--clicks-per-minute", type=float, help="rate for cost time estimates")
    p.add_argument("--out", help="report output directory (default: reports beside the manifest)")
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("recommend-threshold", help="suggest a relative-area threshold from gt masks")
    p.add_argument("--gt", required=True, help="directory of ground-truth masks")
    p.add_argument("--margin", type=float, default=analysis.DEFAULT_MARGIN)
    p.set_defaults(fn=_cmd_recommend_threshold)

    p = sub.add_parser("export", help="export a run manifest as COCO-style JSON")
    p.add_argument("manifest")
    p.add_argument("--out", help="output JSON path (default: annotations.json beside the manifest)")
    p.set_defaults(fn=_cmd_export)

    p = sub.add_parser("serve-mock", help="serve a mock backend over NDJSON stdio")
    p.add_argument(
        "--synthetic",
        help="comma-separated k=v synthetic detector parameters, e.g. seed=7,n_fp=2",
    )
    p.add_argument("--scenario", help="scenario.json file driving the synthetic detector")
    p.add_argument("--fixtures", help="JSON fixture file for the replay detector")
    p.add_argument("--segmenter", choices=["oracle", "boxfill"], help="serve this segmenter")
    p.add_argument("--gt-dir", help="ground-truth masks for the oracle segmenter")
    p.set_defaults(fn=_cmd_serve_mock)

    p = sub.add_parser("conformance", help="probe a backend against the protocol checks")
    p.add_argument("--backend-cmd", required=True, help="command that serves the NDJSON protocol")
    p.add_argument("images", nargs="+", help="sample images to probe with")
    p.add_argument("--prompt", default="target")
    p.add_argument("--box-threshold", type=float, default=0.2)
    p.add_argument("--text-threshold", type=float, default=0.2)
    p.set_defaults(fn=_cmd_conformance)

    p = sub.add_parser("make-synthetic", help="generate a synthetic dataset on disk")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-images", type=int, default=20)
    p.add_argument("--width", type=int, default=192)
    p.add_argument("--height", type=int, default=192)
    p.add_argument("--target-present", choices=["true", "false"], default="true")
    p.add_argument("--n-fp", type=int, default=2)
    p.set_defaults(fn=_cmd_make_synthetic)

    return parser


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--class", dest="class_name", help="target class name (single-class runs)")
    p.add_argument("--prompt", help="referring-expression prompt for --class")
    p.add_argument("--box-threshold", type=float)
    p.add_argument("--text-threshold", type=float)
    p.add_argument("--max-rel-area", type=float, help="relative-area filter threshold")
    p.add_argument(
        "--no-filter",
        action="store_true",
        help="disable the relative-area filter (confidence filtering still applies)",
    )
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int, help="synthetic seed recorded in the manifest")
    p.add_argument("--detector-cmd", help="command serving the detect op over NDJSON stdio")
    p.add_argument("--segmenter-cmd", help="command serving the segment op over NDJSON stdio")
    p.add_argument("--gt-dir", help="ground-truth masks directory (recorded for evaluation)")


def _merge_config(args: argparse.Namespace) -> tuple[PipelineConfig, dict]:
    if args.config:
        config, extras = load_config(args.config)
    else:
        if not args.class_name or not args.prompt:
            raise _UsageError("without --config, both --class and --prompt are required")
        config = PipelineConfig(
            classes=(ClassSpec(class_name=args.class_name, prompt=args.prompt),),
            filter_enabled=not args.no_filter,
            max_relative_area=args.max_rel_area,
        )
        extras = {}
    overrides: dict = {}
    if args.class_name or args.prompt:
        if not (args.class_name and args.prompt):
            raise _UsageError("--class and --prompt must be given together")
        overrides["classes"] = (ClassSpec(class_name=args.class_name, prompt=args.prompt),)
    for flag, key in (
        ("box_threshold", "box_threshold"),
        ("text_threshold", "text_threshold"),
        ("max_rel_area", "max_relative_area"),
        ("workers", "workers"),
        ("seed", "seed"),
        ("detector_cmd", "detector_cmd"),
        ("segmenter_cmd", "segmenter_cmd"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if args.no_filter:
        overrides["filter_enabled"] = False
    try:
        config = config.with_overrides(**overrides)
    except ValueError as e:
        raise _UsageError(str(e)) from e
    if args.images_dir:
        extras["images_dir"] = args.images_dir
    if getattr(args, "gt_dir", None):
        extras["gt_dir"] = args.gt_dir
    if getattr(args, "out", None):
        extras["out"] = args.out
    return config, extras


def _subprocess_factory(config: PipelineConfig) -> BackendFactory:
    assert config.detector_cmd and config.segmenter_cmd

    def factory():
        return (
            BackendClient(config.detector_cmd, name="detector"),
            BackendClient(config.segmenter_cmd, name="segmenter"),
        )

    return factory


def _cmd_annotate(args: argparse.Namespace) -> int:
    config, extras = _merge_config(args)
    images_dir = extras.get("images_dir")
    if not images_dir:
        raise _UsageError("annotate needs an images directory (positional or config images_dir)")
    out_dir = extras.get("out")
    if not out_dir:
        raise _UsageError("annotate needs --out (or config key 'out')")
    if not config.detector_cmd or not config.segmenter_cmd:
        raise _UsageError(
            "annotate needs --detector-cmd and --segmenter-cmd "
            '(e.g. --detector-cmd "segpipe serve-mock --synthetic seed=7")'
        )
    index = ingest(images_dir, extras.get("gt_dir"))
    manifest = annotate_dataset(index, config, out_dir, _subprocess_factory(config))
    n_ok = len(manifest.records)
    n_fail = len(manifest.failures)
    print(f"annotated {n_ok} record(s), {n_fail} failure(s)")
    print(f"manifest: {Path(out_dir) / 'manifest.json'}")
    for failure in manifest.failures[:10]:
        print(f"  failed {failure.image_id}/{failure.class_name}: [{failure.code}] {failure.message}")
    return EXIT_PARTIAL if n_fail else EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = RunManifest.load(args.manifest)
    images_dir = args.images_dir or manifest.dataset.get("images_dir")
    if not images_dir:
        raise _UsageError("manifest lacks an images_dir; pass --images-dir")
    index = ingest(images_dir, args.gt_dir)
    report = evaluate_run(manifest, index)
    out_csv = Path(args.out) if args.out else Path(args.manifest).parent / "metrics.csv"
    write_metrics_csv(out_csv, report.rows)
    print(f"metrics: {out_csv}")
    for name in sorted(report.means):
        m = report.means[name]
        print(
            f"{name}: n={m['count']} dice={m['dice']:.4f} hd={m['hd']:.2f} "
            f"hd95={m['hd95']:.2f} hce={m['hce']:.1f}"
        )
    if report.skipped:
        print(f"skipped {len(report.skipped)} image(s) without ground truth: "
              + ", ".join(report.skipped[:10]))
        return EXIT_PARTIAL
    if not report.rows:
        print("nothing evaluated", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    manifest = RunManifest.load(args.manifest)
    out_dir = Path(args.out) if args.out else Path(args.manifest).parent / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)

    gt_boxes = None
    index = None
    if args.gt_dir:
        images_dir = args.images_dir or manifest.dataset.get("images_dir")
        if not images_dir:
            raise _UsageError("manifest lacks an images_dir; pass --images-dir")
        index = ingest(images_dir, args.gt_dir)
        gt_boxes = {}
        for item in index:
            if item.gt_path is None:
                continue
            bbox = read_mask(item.gt_path).bbox()
            gt_boxes[item.image_id] = (bbox,) if bbox is not None else ()

    scatter = analysis.scatter_report(manifest, gt_boxes, args.max_rel_area)
    analysis.write_scatter_csv(out_dir / "scatter.csv", scatter)
    analysis.write_scatter_svg(out_dir / "scatter.svg", scatter)
    print(f"scatter: {out_dir / 'scatter.csv'} ({len(scatter.rows)} detections)")
    if scatter.gt_area_band:
        lo, hi = scatter.gt_area_band
        print(f"gt relative-area band: [{lo:.4f}, {hi:.4f}]")

    if index is None:
        print("no --gt-dir: skipping comparison, boxplots and cost report")
        return EXIT_OK

    report = evaluate_run(manifest, index)
    if not report.records:
        print("no evaluable records (missing ground truth?)", file=sys.stderr)
        return EXIT_PARTIAL

    dice_values = [r.metrics.dice for r in report.records if r.metrics is not None]
    series = [("filtered" if manifest.config.filter_enabled else "raw", boxplot_stats(dice_values))]
    selected, _ = select_view(report.records)
    if selected:
        series.append(("selected", boxplot_stats([r.metrics.dice for r in selected if r.metrics])))

    if args.compare:
        raw_manifest = RunManifest.load(args.compare)
        raw_report = evaluate_run(raw_manifest, index)
        table = analysis.comparison_table(
            raw_report, report, rel_area_threshold=manifest.config.max_relative_area
        )
        print(table.as_text())
        table.write_csv(out_dir / "comparison.csv")
        (out_dir / "comparison.txt").write_text(table.as_text() + "\n", encoding="utf-8")
        raw_dice = [r.metrics.dice for r in raw_report.records if r.metrics is not None]
        if raw_dice:
            series.insert(0, ("raw", boxplot_stats(raw_dice)))

    analysis.write_boxplot_svg(out_dir / "boxplot_dice.svg", series)

    gt_masks = {}
    for item in index:
        if item.gt_path is not None:
            gt_masks[item.image_id] = read_mask(item.gt_path)
    cost = analysis.cost_report(report.records, gt_masks, args.clicks_per_minute)
    print(cost.as_text())
    (out_dir / "cost.txt").write_text(cost.as_text() + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_recommend_threshold(args: argparse.Namespace) -> int:
    gt_dir = Path(args.gt)
    if not gt_dir.is_dir():
        raise _UsageError(f"--gt directory not found: {gt_dir}")
    sample = []
    for path in sorted(gt_dir.iterdir()):
        if path.suffix.lower() != ".png" or not path.is_file():
            continue
        mask = read_mask(path)
        bbox = mask.bbox()
        if bbox is not None:
            sample.append((bbox, mask.dims))
    if not sample:
        raise _UsageError(f"no nonempty ground-truth masks found in {gt_dir}")
    print(f"{analysis.recommend_threshold(sample, args.margin):.6g}")
    return EXIT_OK


def _cmd_export(args: argparse.Namespace) -> int:
    manifest = RunManifest.load(args.manifest)
    entries = []
    for record in manifest.records:
        mask = manifest.record_mask(record)
        entries.append(
            CocoEntry(
                image_id=record.image_id,
                file_name=Path(record.image_path).name,
                dims=record.dims,
                class_name=record.class_name,
                rle=rle_encode(mask),
            )
        )
    out_path = Path(args.out) if args.out else Path(args.manifest).parent / "annotations.json"
    out_path.write_bytes(coco_json_bytes(export_coco(entries)))
    print(f"export: {out_path} ({len(entries)} mask(s))")
    return EXIT_OK


_RANGE_KEYS = {"fp_area_range", "fp_conf_range", "tp_conf_range", "gt_rel_area_range", "aspect_range"}
_SYNTH_KEYS = _RANGE_KEYS | {
    "seed",
    "prompt",
    "n_fp",
    "tp_jitter_px",
    "include_full_image_fp",
    "target_present",
}


def _parse_synthetic_params(text: str) -> dict:
    """Parse ``seed=7,n_fp=2,fp_conf_range=0.3:0.9`` into scenario kwargs."""
    params: dict = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise _UsageError(f"--synthetic entries must be key=value, got {part!r}")
        key, value = part.split("=", 1)
        key = key.strip()
        if key not in _SYNTH_KEYS:
            raise _UsageError(f"unknown --synthetic key {key!r} (known: {sorted(_SYNTH_KEYS)})")
        if key in _RANGE_KEYS:
            lo, sep, hi = value.partition(":")
            if not sep:
                raise _UsageError(f"range values use lo:hi, got {key}={value!r}")
            params[key] = (float(lo), float(hi))
        elif key == "seed":
            params[key] = int(value)
        elif key == "n_fp":
            params[key] = int(value)
        elif key == "tp_jitter_px":
            params[key] = float(value)
        elif key in ("include_full_image_fp", "target_present"):
            if value.lower() not in ("true", "false", "1", "0"):
                raise _UsageError(f"{key} must be true/false, got {value!r}")
            params[key] = value.lower() in ("true", "1")
        else:
            params[key] = value
    return params


def _cmd_serve_mock(args: argparse.Namespace) -> int:
    detector = None
    scenario = None
    synth_params = None
    chosen = [flag for flag in ("synthetic", "scenario", "fixtures") if getattr(args, flag)]
    if len(chosen) > 1:
        raise _UsageError("--synthetic, --scenario and --fixtures are mutually exclusive")
    if args.scenario:
        scenario = SyntheticScenario.from_json(Path(args.scenario).read_text(encoding="utf-8"))
        detector = SyntheticDetector(scenario)
    elif args.synthetic:
        synth_params = _parse_synthetic_params(args.synthetic)
        if "seed" not in synth_params:
            raise _UsageError("--synthetic needs at least seed=N")
        derive_kwargs = {
            k: synth_params.pop(k)
            for k in ("gt_rel_area_range", "aspect_range")
            if k in synth_params
        }
        template = SyntheticScenario(images={}, **synth_params)
        detector = ProceduralSyntheticDetector(template, **derive_kwargs)
    elif args.fixtures:
        detector = FixtureDetector.from_json_file(args.fixtures)

    segmenter = None
    if args.segmenter == "boxfill":
        segmenter = BoxFillSegmenter()
    elif args.segmenter == "oracle":
        if args.gt_dir:
            source = gt_from_dir(args.gt_dir)
        elif scenario is not None:
            source = gt_from_scenario(scenario)
        elif synth_params is not None:
            source = gt_from_seed(synth_params["seed"], **derive_kwargs)
        else:
            raise _UsageError("oracle segmenter needs --gt-dir, --scenario or --synthetic")
        segmenter = OracleSegmenter(source)

    if detector is None and segmenter is None:
        raise _UsageError(
            "serve-mock needs a detector (--synthetic/--scenario/--fixtures), "
            "a --segmenter, or both"
        )
    serve_loop(MockHandler(detector=detector, segmenter=segmenter))
    return EXIT_OK


def _cmd_conformance(args: argparse.Namespace) -> int:
    with BackendClient(args.backend_cmd, name="probe") as client:
        results = run_conformance(
            client,
            args.images,
            prompt=args.prompt,
            box_threshold=args.box_threshold,
            text_threshold=args.text_threshold,
        )
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_PARTIAL


def _cmd_make_synthetic(args: argparse.Namespace) -> int:
    scenario = build_scenario(
        seed=args.seed,
        n_images=args.n_images,
        width=args.width,
        height=args.height,
        target_present=args.target_present == "true",
        n_fp=args.n_fp,
    )
    out = generate_dataset(scenario, args.out)
    print(f"dataset: {out} ({len(scenario.images)} images)")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, NotADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ProtocolError as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_PARTIAL
    except KeyboardInterrupt:
        return 130
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
