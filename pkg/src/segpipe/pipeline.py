"""Per-image and per-dataset annotation orchestration, plus evaluation.

The per-image flow is: detect with the class prompt, re-apply the
confidence filter defensively, optionally apply the relative-area filter,
segment each kept box, and union the returned masks into one binary mask
for the class. A dataset run fans images out to a worker pool, writes one
mask PNG per (image, class), and persists a manifest that fully describes
the run.
"""

from __future__ import annotations

import json
import queue
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .data_io import DatasetIndex, DatasetItem, MetricsRow, read_image_dims, read_mask, write_json_atomic, write_mask
from .geometry import (
    Detection,
    ImageDims,
    filter_by_confidence,
    filter_by_relative_area,
    normalized_to_pixels,
)
from .mask import BinaryMask, MaskRLE, rle_decode, rle_encode
from .metrics import MetricRecord, dice, hausdorff, hd95, hce_estimate
from .protocol import (
    Backend,
    BackendError,
    DetectRequest,
    ProtocolError,
    SchemaError,
    SegmentRequest,
    TransportError,
    WireDetection,
)

__all__ = [
    "MANIFEST_SCHEMA",
    "ClassSpec",
    "PipelineConfig",
    "AnnotationRecord",
    "RunFailure",
    "RunManifest",
    "BackendFactory",
    "annotate_image",
    "annotate_dataset",
    "EvalReport",
    "evaluate_run",
    "select_view",
    "load_config",
]

MANIFEST_SCHEMA = "annotation-run/1"

CONFIG_KEYS = {
    "classes",
    "box_threshold",
    "text_threshold",
    "max_relative_area",
    "filter_enabled",
    "detector_cmd",
    "segmenter_cmd",
    "workers",
    "seed",
}
# Config-file equivalents of CLI path flags; they ride along with the config
# document but are not part of the semantic pipeline configuration.
CONFIG_EXTRA_KEYS = {"images_dir", "gt_dir", "out"}


@dataclass(frozen=True)
class ClassSpec:
    """A target class and the referring-expression prompt that finds it."""

    class_name: str
    prompt: str

    def __post_init__(self) -> None:
        if not self.class_name:
            raise ValueError("class_name must be nonempty")
        if not self.prompt:
            raise ValueError("prompt must be nonempty")


@dataclass(frozen=True)
class PipelineConfig:
    classes: tuple[ClassSpec, ...]
    box_threshold: float = 0.2
    text_threshold: float = 0.2
    max_relative_area: float | None = None
    filter_enabled: bool = True
    detector_cmd: str | None = None
    segmenter_cmd: str | None = None
    workers: int = 1
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.classes:
            raise ValueError("config needs at least one class")
        names = [c.class_name for c in self.classes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate class names: {names}")
        for name, v in (("box_threshold", self.box_threshold), ("text_threshold", self.text_threshold)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.filter_enabled:
            if self.max_relative_area is None:
                raise ValueError("max_relative_area is required unless the area filter is disabled")
            if not 0.0 < self.max_relative_area <= 1.0:
                raise ValueError(f"max_relative_area must be in (0, 1], got {self.max_relative_area}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "PipelineConfig":
        unknown = set(obj) - CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        classes = tuple(
            ClassSpec(class_name=c["class_name"], prompt=c["prompt"]) for c in obj.get("classes", ())
        )
        kwargs = {k: obj[k] for k in CONFIG_KEYS - {"classes"} if k in obj}
        return cls(classes=classes, **kwargs)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        """Rebuild with non-None overrides applied (CLI flags win)."""
        current = {
            "classes": self.classes,
            "box_threshold": self.box_threshold,
            "text_threshold": self.text_threshold,
            "max_relative_area": self.max_relative_area,
            "filter_enabled": self.filter_enabled,
            "detector_cmd": self.detector_cmd,
            "segmenter_cmd": self.segmenter_cmd,
            "workers": self.workers,
            "seed": self.seed,
        }
        for k, v in overrides.items():
            if k not in current:
                raise ValueError(f"unknown config override: {k}")
            if v is not None:
                current[k] = v
        return PipelineConfig(**current)

    def to_dict(self) -> dict:
        """Semantic config snapshot (workers excluded: execution detail)."""
        return {
            "classes": [{"class_name": c.class_name, "prompt": c.prompt} for c in self.classes],
            "box_threshold": self.box_threshold,
            "text_threshold": self.text_threshold,
            "max_relative_area": self.max_relative_area,
            "filter_enabled": self.filter_enabled,
            "detector_cmd": self.detector_cmd,
            "segmenter_cmd": self.segmenter_cmd,
            "seed": self.seed,
        }


def load_config(path: str | Path) -> tuple["PipelineConfig", dict]:
    """Read a JSON config file.

    Returns the pipeline config plus the path-like extras (images_dir,
    gt_dir, out) that belong to the invocation rather than the pipeline.
    """
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(obj, dict):
        raise ValueError("config file must contain a JSON object")
    unknown = set(obj) - CONFIG_KEYS - CONFIG_EXTRA_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    extras = {k: obj[k] for k in CONFIG_EXTRA_KEYS if k in obj}
    config = PipelineConfig.from_dict({k: v for k, v in obj.items() if k in CONFIG_KEYS})
    return config, extras


# --------------------------------------------------------------------------
# Records and manifest


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    class_name: str
    image_path: str
    dims: ImageDims
    detections_raw: tuple[dict, ...]
    detections_kept: tuple[dict, ...]
    detections_rejected_area: tuple[dict, ...]
    mask_ref: str
    mask_area: int
    mask_rle: MaskRLE | None = None
    metrics: MetricRecord | None = None

    @property
    def n_raw(self) -> int:
        return len(self.detections_raw)

    @property
    def n_kept(self) -> int:
        return len(self.detections_kept)

    @property
    def n_rejected_area(self) -> int:
        return len(self.detections_rejected_area)

    def to_dict(self) -> dict:
        out = {
            "image_id": self.image_id,
            "class_name": self.class_name,
            "image_path": self.image_path,
            "width": self.dims.width,
            "height": self.dims.height,
            "detections_raw": list(self.detections_raw),
            "detections_kept": list(self.detections_kept),
            "detections_rejected_area": list(self.detections_rejected_area),
            "n_raw": self.n_raw,
            "n_kept": self.n_kept,
            "n_rejected_area": self.n_rejected_area,
            "mask_ref": self.mask_ref,
            "mask_area": self.mask_area,
        }
        if self.metrics is not None:
            out["metrics"] = {
                "dice": self.metrics.dice,
                "hd": self.metrics.hd,
                "hd95": self.metrics.hd95,
                "hce": self.metrics.hce,
            }
        return out

    @classmethod
    def from_dict(cls, obj: Mapping) -> "AnnotationRecord":
        metrics = None
        if "metrics" in obj:
            m = obj["metrics"]
            metrics = MetricRecord(dice=m["dice"], hd=m["hd"], hd95=m["hd95"], hce=m["hce"])
        return cls(
            image_id=obj["image_id"],
            class_name=obj["class_name"],
            image_path=obj["image_path"],
            dims=ImageDims(int(obj["width"]), int(obj["height"])),
            detections_raw=tuple(obj["detections_raw"]),
            detections_kept=tuple(obj["detections_kept"]),
            detections_rejected_area=tuple(obj["detections_rejected_area"]),
            mask_ref=obj["mask_ref"],
            mask_area=int(obj["mask_area"]),
            mask_rle=None,
            metrics=metrics,
        )


@dataclass(frozen=True)
class RunFailure:
    image_id: str
    class_name: str
    code: str
    message: str

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "class_name": self.class_name,
            "code": self.code,
            "message": self.message,
        }


@dataclass(frozen=True)
class RunManifest:
    config: PipelineConfig
    dataset: dict
    backends: dict
    execution: dict
    records: tuple[AnnotationRecord, ...]
    failures: tuple[RunFailure, ...]
    root: Path | None = None

    def to_dict(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "config": self.config.to_dict(),
            "dataset": dict(self.dataset),
            "backends": dict(self.backends),
            "execution": dict(self.execution),
            "records": [r.to_dict() for r in self.records],
            "failures": [f.to_dict() for f in self.failures],
        }

    def save(self, path: str | Path) -> None:
        write_json_atomic(path, self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        path = Path(path)
        obj = json.loads(path.read_text(encoding="utf-8"))
        if obj.get("schema") != MANIFEST_SCHEMA:
            raise ValueError(f"not a run manifest (schema {obj.get('schema')!r}): {path}")
        config_dict = dict(obj["config"])
        config_dict["workers"] = obj.get("execution", {}).get("workers", 1)
        return cls(
            config=PipelineConfig.from_dict(config_dict),
            dataset=obj["dataset"],
            backends=obj["backends"],
            execution=obj["execution"],
            records=tuple(AnnotationRecord.from_dict(r) for r in obj["records"]),
            failures=tuple(RunFailure(**f) for f in obj["failures"]),
            root=path.parent,
        )

    def mask_path(self, record: AnnotationRecord) -> Path:
        if self.root is None:
            raise ValueError("manifest has no root directory to resolve mask paths")
        return self.root / record.mask_ref

    def record_mask(self, record: AnnotationRecord) -> BinaryMask:
        if record.mask_rle is not None:
            return rle_decode(record.mask_rle)
        return read_mask(self.mask_path(record))


# --------------------------------------------------------------------------
# Per-image annotation


def _class_dirname(class_name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_. " else "_" for c in class_name)


def _det_entry(wire: WireDetection, px: Detection) -> dict:
    return {
        "box_norm": list(wire.box),
        "box_px": list(px.box.as_tuple()),
        "confidence": wire.confidence,
        "phrase": wire.phrase,
    }


def annotate_image(
    item: DatasetItem,
    dims: ImageDims,
    cls: ClassSpec,
    config: PipelineConfig,
    detector: Backend,
    segmenter: Backend,
    out_root: Path,
) -> AnnotationRecord:
    """Detect, filter, segment and write the class mask for one image."""
    request = DetectRequest(
        image_id=item.image_id,
        image_path=str(item.image_path),
        prompt=cls.prompt,
        box_threshold=config.box_threshold,
        text_threshold=config.text_threshold,
    )
    response = detector.detect(request)

    wire_dets = response.detections
    px_dets = [
        Detection(
            box=normalized_to_pixels(w.box, dims),
            confidence=w.confidence,
            phrase=w.phrase,
            class_name=cls.class_name,
        )
        for w in wire_dets
    ]
    entries = {id(px): _det_entry(w, px) for w, px in zip(wire_dets, px_dets)}

    conf_kept = filter_by_confidence(px_dets, config.box_threshold)
    if config.filter_enabled:
        assert config.max_relative_area is not None
        kept, rejected = filter_by_relative_area(conf_kept, dims, config.max_relative_area)
    else:
        kept, rejected = list(conf_kept), []

    if kept:
        seg_request = SegmentRequest(
            image_id=item.image_id,
            image_path=str(item.image_path),
            boxes=tuple(d.box.as_tuple() for d in kept),
        )
        seg_response = segmenter.segment(seg_request)
        union = BinaryMask.empty(dims)
        for i, rle in enumerate(seg_response.masks):
            mask = rle_decode(rle)
            if mask.dims != dims:
                raise SchemaError(
                    f"mask {i} dims {mask.dims} do not match image dims {dims}",
                    item.image_id,
                )
            union = union | mask
    else:
        # Zero kept detections is a legitimate outcome, not an error; the
        # evaluation counts it as a zero-Dice record.
        union = BinaryMask.empty(dims)

    mask_ref = f"masks/{_class_dirname(cls.class_name)}/{item.image_id}.png"
    mask_path = out_root / mask_ref
    mask_path.parent.mkdir(parents=True, exist_ok=True)
    write_mask(mask_path, union)

    return AnnotationRecord(
        image_id=item.image_id,
        class_name=cls.class_name,
        image_path=str(item.image_path),
        dims=dims,
        detections_raw=tuple(entries[id(d)] for d in px_dets),
        detections_kept=tuple(entries[id(d)] for d in kept),
        detections_rejected_area=tuple(entries[id(d)] for d in rejected),
        mask_ref=mask_ref,
        mask_area=union.count,
        mask_rle=rle_encode(union),
    )


# --------------------------------------------------------------------------
# Dataset runs

BackendFactory = Callable[[], tuple[Backend, Backend]]


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _failure_code(exc: ProtocolError) -> str:
    if isinstance(exc, BackendError):
        return exc.code
    if isinstance(exc, TransportError):
        return "transport"
    return "schema"


def annotate_dataset(
    index: DatasetIndex,
    config: PipelineConfig,
    out_dir: str | Path,
    backend_factory: BackendFactory,
    manifest_name: str = "manifest.json",
) -> RunManifest:
    """Annotate every (image, class) pair and write masks plus a manifest.

    A backend failure on one image marks that record failed and the run
    continues; the manifest is written atomically at the end either way.
    Results are keyed and sorted by (image_id, class_name), so the manifest
    is identical for any worker count.
    """
    if len(index) == 0:
        raise ValueError("dataset is empty")
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    started_at = _now_iso()

    # Probe both backends up front: a misconfigured command should fail the
    # run before any per-image work begins.
    detector, segmenter = backend_factory()
    try:
        det_ping = detector.ping()
        seg_ping = segmenter.ping()
    finally:
        detector.close()
        segmenter.close()
    if "detect" not in det_ping.capabilities:
        raise ValueError(f"detector backend lacks 'detect' capability: {det_ping.capabilities}")
    if "segment" not in seg_ping.capabilities:
        raise ValueError(f"segmenter backend lacks 'segment' capability: {seg_ping.capabilities}")
    backends_info = {
        "detector": {"capabilities": list(det_ping.capabilities), **det_ping.info},
        "segmenter": {"capabilities": list(seg_ping.capabilities), **seg_ping.info},
    }

    tasks: queue.SimpleQueue = queue.SimpleQueue()
    n_tasks = 0
    for item in index:
        for cls in config.classes:
            tasks.put((item, cls))
            n_tasks += 1

    results: dict[tuple[str, str], AnnotationRecord] = {}
    failures: list[RunFailure] = []
    lock = threading.Lock()

    def worker() -> None:
        try:
            det, seg = backend_factory()
        except Exception as e:
            with lock:
                worker_errors.append(f"{type(e).__name__}: {e}")
            return
        try:
            while True:
                try:
                    item, cls = tasks.get_nowait()
                except queue.Empty:
                    return
                key = (item.image_id, cls.class_name)
                try:
                    dims = read_image_dims(item.image_path)
                    record = annotate_image(item, dims, cls, config, det, seg, out_root)
                    with lock:
                        results[key] = record
                except ProtocolError as e:
                    with lock:
                        failures.append(
                            RunFailure(item.image_id, cls.class_name, _failure_code(e), str(e))
                        )
                    if isinstance(e, TransportError):
                        for b in (det, seg):
                            try:
                                b.restart()
                            except Exception:
                                pass
                except (OSError, ValueError) as e:
                    with lock:
                        failures.append(
                            RunFailure(item.image_id, cls.class_name, "io-error", f"{type(e).__name__}: {e}")
                        )
        finally:
            det.close()
            seg.close()

    worker_errors: list[str] = []
    n_workers = min(config.workers, n_tasks)
    threads = [threading.Thread(target=worker, name=f"annotate-{i}") for i in range(n_workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    # Tasks left unprocessed (every worker failed to start) become failures.
    while True:
        try:
            item, cls = tasks.get_nowait()
        except queue.Empty:
            break
        detail = "; ".join(worker_errors) or "no worker available"
        failures.append(RunFailure(item.image_id, cls.class_name, "worker-error", detail))

    manifest = RunManifest(
        config=config,
        dataset={
            "images_dir": str(Path(index.items[0].image_path).parent) if len(index) else "",
            "image_ids": list(index.image_ids),
        },
        backends=backends_info,
        execution={
            "workers": config.workers,
            "out_dir": str(out_root),
            "started_at": started_at,
            "finished_at": _now_iso(),
        },
        records=tuple(results[k] for k in sorted(results)),
        failures=tuple(sorted(failures, key=lambda f: (f.image_id, f.class_name))),
        root=out_root,
    )
    manifest.save(out_root / manifest_name)
    return manifest


# --------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class EvalReport:
    records: tuple[AnnotationRecord, ...]
    rows: tuple[MetricsRow, ...]
    skipped: tuple[str, ...]
    means: dict

    def mean(self, metric: str, class_name: str | None = None) -> float:
        key = class_name if class_name is not None else "all"
        return self.means[key][metric]


def evaluate_run(manifest: RunManifest, index: DatasetIndex) -> EvalReport:
    """Join predicted masks against ground truth and compute metrics.

    Images without a ground-truth mask are skipped and listed. Empty
    predictions naturally yield Dice 0 (or 1 when gt is empty too) and the
    diagonal sentinel for the distance metrics.
    """
    out_records: list[AnnotationRecord] = []
    rows: list[MetricsRow] = []
    skipped: list[str] = []
    for record in manifest.records:
        try:
            item = index.get(record.image_id)
        except KeyError:
            item = None
        if item is None or item.gt_path is None:
            skipped.append(record.image_id)
            continue
        gt = read_mask(item.gt_path)
        pred = manifest.record_mask(record)
        if pred.dims != gt.dims:
            raise ValueError(
                f"{record.image_id}: prediction dims {pred.dims} do not match gt dims {gt.dims}"
            )
        metric = MetricRecord(
            dice=dice(pred, gt),
            hd=hausdorff(pred, gt),
            hd95=hd95(pred, gt),
            hce=hce_estimate(pred, gt),
        )
        enriched = AnnotationRecord(
            image_id=record.image_id,
            class_name=record.class_name,
            image_path=record.image_path,
            dims=record.dims,
            detections_raw=record.detections_raw,
            detections_kept=record.detections_kept,
            detections_rejected_area=record.detections_rejected_area,
            mask_ref=record.mask_ref,
            mask_area=record.mask_area,
            mask_rle=record.mask_rle,
            metrics=metric,
        )
        out_records.append(enriched)
        rows.append(
            MetricsRow(
                image_id=record.image_id,
                class_name=record.class_name,
                dice=metric.dice,
                hd=metric.hd,
                hd95=metric.hd95,
                hce=metric.hce,
                n_raw=record.n_raw,
                n_kept=record.n_kept,
                n_rejected_area=record.n_rejected_area,
            )
        )
    means: dict[str, dict[str, float]] = {}
    groups: dict[str, list[MetricRecord]] = {"all": []}
    for rec in out_records:
        assert rec.metrics is not None
        groups.setdefault(rec.class_name, []).append(rec.metrics)
        groups["all"].append(rec.metrics)
    for name, metrics in groups.items():
        if not metrics:
            continue
        n = len(metrics)
        means[name] = {
            "dice": sum(m.dice for m in metrics) / n,
            "hd": sum(m.hd for m in metrics) / n,
            "hd95": sum(m.hd95 for m in metrics) / n,
            "hce": sum(m.hce for m in metrics) / n,
            "count": n,
        }
    return EvalReport(
        records=tuple(out_records),
        rows=tuple(rows),
        skipped=tuple(skipped),
        means=means,
    )


def select_view(records: Sequence[AnnotationRecord]) -> tuple[list[AnnotationRecord], int]:
    """Drop zero-Dice records; returns (kept, excluded_count)."""
    for r in records:
        if r.metrics is None:
            raise ValueError(f"record {r.image_id}/{r.class_name} has no metrics")
    kept = [r for r in records if r.metrics is not None and r.metrics.dice > 0.0]
    return kept, len(records) - len(kept)
