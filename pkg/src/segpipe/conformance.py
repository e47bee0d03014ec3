"""Protocol conformance probes for backend implementations.

Runs a battery of checks against a live backend: ping shape, detect
response schema (including box normalization bounds), segment/box count
alignment, RLE validity and dimensions, determinism (unless the backend
declares itself nondeterministic in ping metadata), and recovery after
malformed requests.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .data_io import read_image_dims
from .geometry import normalized_to_pixels
from .mask import rle_decode
from .protocol import DetectRequest, ProtocolError, SchemaError, SegmentRequest

__all__ = ["CheckResult", "run_conformance"]

KNOWN_CAPABILITIES = {"detect", "segment"}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _probe_boxes(width: int, height: int) -> tuple[tuple[float, float, float, float], ...]:
    return (
        (0.0, 0.0, width / 2.0, height / 2.0),
        (width / 4.0, height / 4.0, float(width), float(height)),
    )


def run_conformance(
    backend,
    image_paths: Sequence[str | Path],
    prompt: str = "target",
    box_threshold: float = 0.2,
    text_threshold: float = 0.2,
) -> list[CheckResult]:
    """Probe a backend over the given sample images.

    The backend object must offer ping/detect/segment plus the raw request
    hooks (BackendClient and InProcessBackend both do). Checks never raise;
    every outcome lands in the result list.
    """
    results: list[CheckResult] = []

    def check(name: str, fn) -> object | None:
        try:
            detail = fn()
            results.append(CheckResult(name, True, detail if isinstance(detail, str) else "ok"))
            return detail
        except Exception as e:
            results.append(CheckResult(name, False, f"{type(e).__name__}: {e}"))
            return None

    # Ping shape and capability vocabulary.
    ping_box: dict = {}

    def do_ping() -> str:
        resp = backend.ping()
        unknown = set(resp.capabilities) - KNOWN_CAPABILITIES
        if unknown:
            raise SchemaError(f"unknown capabilities: {sorted(unknown)}")
        if not resp.capabilities:
            raise SchemaError("backend advertises no capabilities")
        ping_box["resp"] = resp
        return f"capabilities: {', '.join(resp.capabilities)}"

    check("ping", do_ping)
    ping = ping_box.get("resp")
    if ping is None:
        return results
    caps = set(ping.capabilities)
    deterministic = bool(ping.info.get("deterministic", True))

    for path in image_paths:
        path = Path(path)
        image_id = path.stem
        try:
            dims = read_image_dims(path)
        except Exception as e:
            results.append(
                CheckResult(f"sample[{image_id}]", False, f"unreadable image: {type(e).__name__}: {e}")
            )
            continue

        det_req = DetectRequest(
            image_id=image_id,
            image_path=str(path),
            prompt=prompt,
            box_threshold=box_threshold,
            text_threshold=text_threshold,
        )
        detections = None
        if "detect" in caps:
            try:
                resp = backend.detect(det_req)
                detections = resp.detections
                results.append(
                    CheckResult(
                        f"detect-schema[{image_id}]", True, f"{len(detections)} detection(s), boxes in bounds"
                    )
                )
            except ProtocolError as e:
                results.append(CheckResult(f"detect-schema[{image_id}]", False, f"{type(e).__name__}: {e}"))

            if detections is not None:
                if deterministic:

                    def do_repeat() -> str:
                        again = backend.detect(det_req)
                        if again.detections != detections:
                            raise SchemaError("two identical detect requests returned different results")
                        return "identical replies"

                    check(f"detect-deterministic[{image_id}]", do_repeat)
                else:
                    results.append(
                        CheckResult(
                            f"detect-deterministic[{image_id}]",
                            True,
                            "skipped: backend declares itself nondeterministic",
                        )
                    )

        if "segment" in caps:
            if detections:
                boxes = tuple(
                    normalized_to_pixels(d.box, dims).as_tuple() for d in detections[:3]
                )
            else:
                boxes = _probe_boxes(dims.width, dims.height)
            seg_req = SegmentRequest(image_id=image_id, image_path=str(path), boxes=boxes)

            def do_segment() -> str:
                resp = backend.segment(seg_req)
                # Count alignment is enforced by the response parser; decode
                # and dimension checks happen here.
                for i, rle in enumerate(resp.masks):
                    mask = rle_decode(rle)
                    if (mask.dims.width, mask.dims.height) != (dims.width, dims.height):
                        raise SchemaError(
                            f"mask {i} dims {mask.dims} do not match image dims {dims}"
                        )
                return f"{len(resp.masks)} mask(s) aligned with boxes, RLE valid"

            check(f"segment-alignment[{image_id}]", do_segment)

    if "segment" in caps and image_paths:
        first = Path(image_paths[0])

        def do_zero_boxes() -> str:
            resp = backend.segment(
                SegmentRequest(image_id=first.stem, image_path=str(first), boxes=())
            )
            if resp.masks != ():
                raise SchemaError(f"expected zero masks for zero boxes, got {len(resp.masks)}")
            return "zero boxes -> zero masks"

        check("segment-zero-boxes", do_zero_boxes)

    # A malformed request must produce an error object, not kill the server.
    def do_bad_request() -> str:
        reply = backend.request_raw({"op": "detect", "image_id": 42})
        if not isinstance(reply, dict) or "error" not in reply:
            raise SchemaError(f"expected an error reply, got {reply!r}")
        err = reply["error"]
        if not isinstance(err, dict) or not isinstance(err.get("code"), str) or not isinstance(err.get("message"), str):
            raise SchemaError(f"error object malformed: {err!r}")
        return f"error code {err['code']!r}"

    check("error-reply-shape", do_bad_request)

    def do_unknown_op() -> str:
        reply = backend.request_raw({"op": "transmogrify"})
        if not isinstance(reply, dict) or "error" not in reply:
            raise SchemaError(f"expected an error reply, got {reply!r}")
        return f"error code {reply['error'].get('code')!r}"

    check("unknown-op", do_unknown_op)

    if hasattr(backend, "request_raw_line"):

        def do_bad_json() -> str:
            reply = backend.request_raw_line("this is not json {")
            if not isinstance(reply, dict) or "error" not in reply:
                raise SchemaError(f"expected an error reply, got {reply!r}")
            return f"error code {reply['error'].get('code')!r}"

        check("bad-json-recovery", do_bad_json)

    def do_final_ping() -> str:
        backend.ping()
        return "backend alive after error probes"

    check("recovery-ping", do_final_ping)
    return results
