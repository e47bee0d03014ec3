"""Reference backends for testing and offline runs.

These are the detector/segmenter implementations behind ``serve-mock`` and
the in-process test doubles. Each detector or segmenter is a callable that
a ``MockHandler`` composes into a full protocol server.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from .data_io import read_image_dims, read_mask
from .geometry import BBox, ImageDims
from .mask import BinaryMask, MaskRLE, rle_encode
from .protocol import DetectRequest, SegmentRequest, WireDetection
from .synthetic import (
    DEFAULT_ASPECT_RANGE,
    DEFAULT_GT_REL_AREA_RANGE,
    SyntheticScenario,
    derive_image,
    gt_mask_for,
    synthesize_detections,
)

__all__ = [
    "MockHandler",
    "FixtureDetector",
    "SyntheticDetector",
    "ProceduralSyntheticDetector",
    "OracleSegmenter",
    "BoxFillSegmenter",
    "gt_from_scenario",
    "gt_from_dir",
    "gt_from_dict",
    "gt_from_seed",
]

DetectorFn = Callable[[DetectRequest], Sequence[WireDetection]]
SegmenterFn = Callable[[SegmentRequest], Sequence[MaskRLE]]
GtSource = Callable[[SegmentRequest], BinaryMask]

DEFAULT_TIGHT_FRAC = 0.5


class MockHandler:
    """Composes detector/segmenter callables into a protocol handler."""

    def __init__(
        self,
        detector: DetectorFn | None = None,
        segmenter: SegmenterFn | None = None,
        extra_info: dict | None = None,
    ):
        if detector is None and segmenter is None:
            raise ValueError("handler needs a detector, a segmenter, or both")
        self._detector = detector
        self._segmenter = segmenter
        self._extra_info = dict(extra_info or {})

    def capabilities(self) -> tuple[str, ...]:
        caps = []
        if self._detector is not None:
            caps.append("detect")
        if self._segmenter is not None:
            caps.append("segment")
        return tuple(caps)

    def info(self) -> dict:
        info = {"backend": "segpipe-mock", "deterministic": True}
        info.update(self._extra_info)
        return info

    def handle_detect(self, request: DetectRequest) -> Sequence[WireDetection]:
        assert self._detector is not None
        return self._detector(request)

    def handle_segment(self, request: SegmentRequest) -> Sequence[MaskRLE]:
        assert self._segmenter is not None
        return self._segmenter(request)


class FixtureDetector:
    """Replays canned detections keyed by image id and optionally prompt.

    Like a real detector, it applies the request's box_threshold to its raw
    detections; unknown keys yield no detections.
    """

    def __init__(self, fixtures: dict[tuple[str, str | None], Sequence[WireDetection]]):
        self._fixtures = {k: tuple(v) for k, v in fixtures.items()}

    @classmethod
    def from_mapping(cls, by_image: dict[str, Sequence[WireDetection]]) -> "FixtureDetector":
        """Prompt-independent fixtures: ``{image_id: [detections]}``."""
        return cls({(image_id, None): dets for image_id, dets in by_image.items()})

    @classmethod
    def from_json_file(cls, path: str | Path) -> "FixtureDetector":
        """Load fixtures from JSON.

        Each image id maps either to a detection list (any prompt) or to
        ``{prompt: [detections]}``. A detection is ``{"box": [x0,y0,x1,y1],
        "confidence", "phrase"}`` with normalized coordinates.
        """
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        fixtures: dict[tuple[str, str | None], list[WireDetection]] = {}
        for image_id, value in raw.items():
            if isinstance(value, dict):
                for prompt, dets in value.items():
                    fixtures[(image_id, prompt)] = [_det_from_json(d) for d in dets]
            else:
                fixtures[(image_id, None)] = [_det_from_json(d) for d in value]
        return cls(fixtures)

    def __call__(self, request: DetectRequest) -> list[WireDetection]:
        dets = self._fixtures.get((request.image_id, request.prompt))
        if dets is None:
            dets = self._fixtures.get((request.image_id, None), ())
        return [d for d in dets if d.confidence >= request.box_threshold]


def _det_from_json(d: dict) -> WireDetection:
    box = d["box"]
    return WireDetection(
        box=(float(box[0]), float(box[1]), float(box[2]), float(box[3])),
        confidence=float(d["confidence"]),
        phrase=str(d.get("phrase", "")),
    )


class SyntheticDetector:
    """Simulated detector driven by an explicit synthetic scenario."""

    def __init__(self, scenario: SyntheticScenario):
        self._scenario = scenario

    def __call__(self, request: DetectRequest) -> list[WireDetection]:
        if request.image_id not in self._scenario.images:
            return []
        dets = synthesize_detections(self._scenario, request.image_id)
        return [d for d in dets if d.confidence >= request.box_threshold]


class ProceduralSyntheticDetector:
    """Simulated detector that needs only a seed.

    Ground truth for each image is re-derived from (seed, image_id) and the
    image file's dimensions, so this backend reproduces the detections for
    any dataset written by generate_dataset with the same seed, without the
    scenario file.
    """

    def __init__(
        self,
        template: SyntheticScenario,
        gt_rel_area_range: tuple[float, float] = DEFAULT_GT_REL_AREA_RANGE,
        aspect_range: tuple[float, float] = DEFAULT_ASPECT_RANGE,
    ):
        if template.images:
            raise ValueError("procedural detector derives images; template must have none")
        self._template = template
        self._gt_rel_area_range = gt_rel_area_range
        self._aspect_range = aspect_range

    def __call__(self, request: DetectRequest) -> list[WireDetection]:
        dims = read_image_dims(request.image_path)
        img = derive_image(
            self._template.seed, request.image_id, dims, self._gt_rel_area_range, self._aspect_range
        )
        scenario = replace(self._template, images={request.image_id: img})
        dets = synthesize_detections(scenario, request.image_id)
        return [d for d in dets if d.confidence >= request.box_threshold]


def gt_from_scenario(scenario: SyntheticScenario) -> GtSource:
    def source(request: SegmentRequest) -> BinaryMask:
        if request.image_id not in scenario.images:
            raise FileNotFoundError(f"no ground truth for image {request.image_id!r}")
        return gt_mask_for(scenario, request.image_id)

    return source


def gt_from_dir(gt_dir: str | Path) -> GtSource:
    root = Path(gt_dir)

    def source(request: SegmentRequest) -> BinaryMask:
        path = root / f"{request.image_id}.png"
        if not path.is_file():
            raise FileNotFoundError(f"no ground truth mask at {path}")
        return read_mask(path)

    return source


def gt_from_dict(masks: dict[str, BinaryMask]) -> GtSource:
    def source(request: SegmentRequest) -> BinaryMask:
        mask = masks.get(request.image_id)
        if mask is None:
            raise FileNotFoundError(f"no ground truth for image {request.image_id!r}")
        return mask

    return source


def gt_from_seed(
    seed: int,
    gt_rel_area_range: tuple[float, float] = DEFAULT_GT_REL_AREA_RANGE,
    aspect_range: tuple[float, float] = DEFAULT_ASPECT_RANGE,
) -> GtSource:
    """Ground truth re-derived from the seed, mirroring derive_image."""

    def source(request: SegmentRequest) -> BinaryMask:
        dims = read_image_dims(request.image_path)
        img = derive_image(seed, request.image_id, dims, gt_rel_area_range, aspect_range)
        mask = BinaryMask.empty(dims)
        for box in img.gt_boxes:
            mask = mask | BinaryMask.from_box(box, dims)
        return mask

    return source


class OracleSegmenter:
    """Ground-truth-aware segmenter that mimics a promptable model.

    For a box that fits the target snugly (at least ``tight_frac`` of the
    box covered by ground truth) it returns exactly the ground truth inside
    the box. For a loose box it behaves like a model told "there is an
    object here" about background: it hallucinates the whole box as the
    object. That makes oversized false-positive boxes poison the combined
    mask, which is the failure mode the area filter removes.
    """

    def __init__(self, gt_source: GtSource, tight_frac: float = DEFAULT_TIGHT_FRAC):
        self._gt_source = gt_source
        self.tight_frac = tight_frac

    def __call__(self, request: SegmentRequest) -> list[MaskRLE]:
        gt = self._gt_source(request)
        dims = gt.dims
        masks = []
        for raw in request.boxes:
            fill = BinaryMask.from_box(BBox(*raw).clamped(dims), dims)
            inter = gt & fill
            if inter.count >= self.tight_frac * fill.count:
                masks.append(rle_encode(inter))
            else:
                masks.append(rle_encode(fill))
        return masks


class BoxFillSegmenter:
    """Degenerate segmenter: every box comes back filled solid."""

    def __init__(self, dims_source: Callable[[SegmentRequest], ImageDims] | None = None):
        self._dims_source = dims_source or (lambda req: read_image_dims(req.image_path))

    def __call__(self, request: SegmentRequest) -> list[MaskRLE]:
        dims = self._dims_source(request)
        return [
            rle_encode(BinaryMask.from_box(BBox(*raw).clamped(dims), dims))
            for raw in request.boxes
        ]
