"""NDJSON-over-stdio server: one JSON request per line, one reply per line.

Error replies are in-band objects ``{"error": {"code", "message"}}`` and the
loop keeps serving after any recoverable failure; only EOF stops it. Requests
are handled strictly sequentially, so callers wanting parallelism spawn
several processes.
"""

from __future__ import annotations

import json
import numbers
from typing import IO

from . import __version__
from .config import BackendConfig
from .detectors import GroundingDinoDetector, HeuristicDetector
from .rle import encode
from .segmenters import HeuristicSegmenter, SamSegmenter


class RequestError(Exception):
    """Invalid request content; reported as a bad-request error reply."""


def _require(obj: dict, key: str, kind: type, label: str):
    if key not in obj:
        raise RequestError(f"{label} requires {key!r}")
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            raise RequestError(f"{key!r} must be a number")
        return float(value)
    if not isinstance(value, kind):
        raise RequestError(f"{key!r} must be {kind.__name__}")
    return value


def _threshold(obj: dict, key: str, default: float) -> float:
    if key not in obj:
        return default
    value = _require(obj, key, float, "detect")
    if not 0.0 <= value <= 1.0:
        raise RequestError(f"{key!r} must lie in [0, 1]")
    return value


def _pixel_boxes(obj: dict) -> list[tuple[float, float, float, float]]:
    raw = _require(obj, "boxes", list, "segment")
    boxes = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, list) or len(entry) != 4:
            raise RequestError(f"boxes[{i}] must be [x0, y0, x1, y1]")
        coords = []
        for c in entry:
            if isinstance(c, bool) or not isinstance(c, numbers.Real):
                raise RequestError(f"boxes[{i}] must contain numbers")
            coords.append(float(c))
        x0, y0, x1, y1 = coords
        if x1 < x0 or y1 < y0:
            raise RequestError(f"boxes[{i}] has reversed corners")
        boxes.append((x0, y0, x1, y1))
    return boxes


class ModelBackendHandler:
    """Dispatches ping/detect/segment onto the configured engine pair."""

    DEFAULT_BOX_THRESHOLD = 0.25
    DEFAULT_TEXT_THRESHOLD = 0.25

    def __init__(self, config: BackendConfig) -> None:
        config.validate_startup()
        self.config = config
        self.engine = config.resolved_engine()
        if self.engine == "models":  # pragma: no cover - needs weights
            self.detector = GroundingDinoDetector(
                config.detector_weights, config.detector_config, config.device, config.max_side
            )
            self.segmenter = SamSegmenter(
                config.segmenter_weights, config.sam_model_type, config.device
            )
            self.deterministic = config.device == "cpu"
        else:
            self.detector = HeuristicDetector(config.max_side)
            self.segmenter = HeuristicSegmenter()
            self.deterministic = True

    def ping(self) -> dict:
        reply = {
            "ok": True,
            "capabilities": ["detect", "segment"],
            "backend": "model-backend",
            "version": __version__,
            "engine": self.engine,
            "device": self.config.device,
            "max_side": self.config.max_side,
            "deterministic": self.deterministic,
        }
        reply.update(self.detector.info())
        reply.update(self.segmenter.info())
        return reply

    def detect(self, request: dict) -> dict:
        image_id = _require(request, "image_id", object, "detect")
        image_path = _require(request, "image_path", str, "detect")
        prompt = _require(request, "prompt", str, "detect")
        box_threshold = _threshold(request, "box_threshold", self.DEFAULT_BOX_THRESHOLD)
        text_threshold = _threshold(request, "text_threshold", self.DEFAULT_TEXT_THRESHOLD)
        detections = self.detector.detect(image_path, prompt, box_threshold, text_threshold)
        return {"image_id": image_id, "detections": [d.to_wire() for d in detections]}

    def segment(self, request: dict) -> dict:
        image_id = _require(request, "image_id", object, "segment")
        image_path = _require(request, "image_path", str, "segment")
        boxes = _pixel_boxes(request)
        masks = self.segmenter.segment(image_path, boxes)
        return {"image_id": image_id, "masks": [encode(m) for m in masks]}


def _error(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def handle_line(handler: ModelBackendHandler, line: str) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return _error("bad-json", f"unparseable request: {exc}")
    if not isinstance(request, dict):
        return _error("bad-request", "request must be a JSON object")
    op = request.get("op")
    if op == "ping":
        return handler.ping()
    if op not in ("detect", "segment"):
        return _error("unsupported-op", f"unknown op {op!r}")
    try:
        if op == "detect":
            return handler.detect(request)
        return handler.segment(request)
    except RequestError as exc:
        return _error("bad-request", str(exc))
    except FileNotFoundError as exc:
        return _error("not-found", str(exc))
    except Exception as exc:  # the loop must survive engine failures
        return _error("internal", f"{type(exc).__name__}: {exc}")


def serve(handler: ModelBackendHandler, stdin: IO[str], stdout: IO[str]) -> None:
    for line in stdin:
        if not line.strip():
            continue
        reply = handle_line(handler, line)
        stdout.write(json.dumps(reply, separators=(",", ":")) + "\n")
        stdout.flush()
