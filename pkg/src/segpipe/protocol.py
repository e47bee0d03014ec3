"""NDJSON-over-stdio protocol between the pipeline and model backends.

A backend is a process that reads one JSON object per line on stdin and
writes one JSON object per line on stdout. Three operations exist:

* ``{"op": "ping"}`` ->
  ``{"ok": true, "capabilities": ["detect", ...], ...extra info}``
* ``{"op": "detect", "image_id", "image_path", "prompt",
  "box_threshold", "text_threshold"}`` ->
  ``{"image_id", "detections": [{"box": [x0,y0,x1,y1], "confidence",
  "phrase"}, ...]}`` with box coordinates normalized to [0, 1].
* ``{"op": "segment", "image_id", "image_path", "boxes": [[x0,y0,x1,y1],
  ...]}`` (pixel coordinates) ->
  ``{"image_id", "masks": [{"size": [H, W], "counts": [...]}, ...]}``
  with one run-length mask per input box, in order.

Any operation may instead answer ``{"error": {"code", "message"}}``; the
backend must keep serving afterwards.

``BackendClient`` speaks this protocol to a subprocess. ``InProcessBackend``
gives a handler object the same interface by serializing through the exact
same JSON encode/validate path, so in-process mocks cannot bypass wire
checks. ``serve_loop`` is the server half for implementing backends.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass, field
from typing import IO, Protocol, Sequence

from .geometry import NORM_TOL
from .mask import MaskRLE

__all__ = [
    "ProtocolError",
    "TransportError",
    "SchemaError",
    "BackendError",
    "WireDetection",
    "DetectRequest",
    "DetectResponse",
    "SegmentRequest",
    "SegmentResponse",
    "PingResponse",
    "BackendHandler",
    "Backend",
    "BackendClient",
    "InProcessBackend",
    "serve_loop",
    "handle_line",
]

DEFAULT_TIMEOUT_S = 60.0


class ProtocolError(Exception):
    """Base for protocol-level failures; carries the image id when known."""

    def __init__(self, message: str, image_id: str | None = None):
        super().__init__(message)
        self.image_id = image_id


class TransportError(ProtocolError):
    """The backend process died, hung, or produced unparseable output."""


class SchemaError(ProtocolError):
    """A JSON message was readable but violated the wire schema."""


class BackendError(ProtocolError):
    """The backend answered with an explicit error object."""

    def __init__(self, code: str, message: str, image_id: str | None = None):
        super().__init__(f"[{code}] {message}", image_id)
        self.code = code


# --------------------------------------------------------------------------
# Wire messages


@dataclass(frozen=True)
class WireDetection:
    """One detection as it appears on the wire (normalized xyxy box)."""

    box: tuple[float, float, float, float]
    confidence: float
    phrase: str

    def to_wire(self) -> dict:
        return {
            "box": list(self.box),
            "confidence": self.confidence,
            "phrase": self.phrase,
        }


@dataclass(frozen=True)
class DetectRequest:
    image_id: str
    image_path: str
    prompt: str
    box_threshold: float
    text_threshold: float

    def to_wire(self) -> dict:
        return {
            "op": "detect",
            "image_id": self.image_id,
            "image_path": self.image_path,
            "prompt": self.prompt,
            "box_threshold": self.box_threshold,
            "text_threshold": self.text_threshold,
        }


@dataclass(frozen=True)
class DetectResponse:
    image_id: str
    detections: tuple[WireDetection, ...]


@dataclass(frozen=True)
class SegmentRequest:
    image_id: str
    image_path: str
    boxes: tuple[tuple[float, float, float, float], ...]

    def to_wire(self) -> dict:
        return {
            "op": "segment",
            "image_id": self.image_id,
            "image_path": self.image_path,
            "boxes": [list(b) for b in self.boxes],
        }


@dataclass(frozen=True)
class SegmentResponse:
    image_id: str
    masks: tuple[MaskRLE, ...]


@dataclass(frozen=True)
class PingResponse:
    ok: bool
    capabilities: tuple[str, ...]
    info: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# Validation


def _fail(msg: str, image_id: str | None = None) -> None:
    raise SchemaError(msg, image_id)


def _get_str(obj: dict, key: str, image_id: str | None = None) -> str:
    v = obj.get(key)
    if not isinstance(v, str):
        _fail(f"field {key!r} must be a string, got {type(v).__name__}", image_id)
    return v


def _get_num(
    obj: dict,
    key: str,
    lo: float | None = None,
    hi: float | None = None,
    image_id: str | None = None,
) -> float:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"field {key!r} must be a number, got {type(v).__name__}", image_id)
    f = float(v)
    if lo is not None and f < lo or hi is not None and f > hi:
        _fail(f"field {key!r} out of range [{lo}, {hi}]: {f}", image_id)
    return f


def _check_error_reply(obj: dict, image_id: str | None) -> None:
    """Raise BackendError if the reply is an explicit error object."""
    if not isinstance(obj, dict):
        _fail(f"reply must be a JSON object, got {type(obj).__name__}", image_id)
    err = obj.get("error")
    if err is None:
        return
    if not isinstance(err, dict):
        _fail("error field must be an object", image_id)
    code = err.get("code")
    message = err.get("message")
    if not isinstance(code, str) or not isinstance(message, str):
        _fail("error object needs string 'code' and 'message'", image_id)
    raise BackendError(code, message, image_id)


def _parse_norm_box(raw: object, image_id: str | None) -> tuple[float, float, float, float]:
    if not isinstance(raw, list) or len(raw) != 4:
        _fail(f"box must be a list of 4 numbers, got {raw!r}", image_id)
    vals = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            _fail(f"box coordinate must be a number, got {v!r}", image_id)
        vals.append(float(v))
    x0, y0, x1, y1 = vals
    for v in vals:
        if v < -NORM_TOL or v > 1.0 + NORM_TOL:
            _fail(f"normalized box coordinate out of [0,1]: {v}", image_id)
    if x1 < x0 - NORM_TOL or y1 < y0 - NORM_TOL:
        _fail(f"box corners out of order: {vals}", image_id)
    return (x0, y0, x1, y1)


def parse_detect_response(obj: object, request: DetectRequest) -> DetectResponse:
    """Validate a raw detect reply against the wire schema and the request."""
    image_id = request.image_id
    _check_error_reply(obj, image_id)
    assert isinstance(obj, dict)
    got_id = _get_str(obj, "image_id", image_id)
    if got_id != image_id:
        _fail(f"image_id mismatch: sent {image_id!r}, got {got_id!r}", image_id)
    raw_dets = obj.get("detections")
    if not isinstance(raw_dets, list):
        _fail("field 'detections' must be a list", image_id)
    dets = []
    for i, rd in enumerate(raw_dets):
        if not isinstance(rd, dict):
            _fail(f"detections[{i}] must be an object", image_id)
        box = _parse_norm_box(rd.get("box"), image_id)
        conf = _get_num(rd, "confidence", 0.0, 1.0, image_id)
        phrase = _get_str(rd, "phrase", image_id)
        dets.append(WireDetection(box=box, confidence=conf, phrase=phrase))
    return DetectResponse(image_id=image_id, detections=tuple(dets))


def parse_segment_response(obj: object, request: SegmentRequest) -> SegmentResponse:
    """Validate a raw segment reply; mask count must match the box count."""
    image_id = request.image_id
    _check_error_reply(obj, image_id)
    assert isinstance(obj, dict)
    got_id = _get_str(obj, "image_id", image_id)
    if got_id != image_id:
        _fail(f"image_id mismatch: sent {image_id!r}, got {got_id!r}", image_id)
    raw_masks = obj.get("masks")
    if not isinstance(raw_masks, list):
        _fail("field 'masks' must be a list", image_id)
    if len(raw_masks) != len(request.boxes):
        _fail(
            f"expected {len(request.boxes)} masks (one per box), got {len(raw_masks)}",
            image_id,
        )
    masks = []
    for i, rm in enumerate(raw_masks):
        try:
            masks.append(MaskRLE.from_wire(rm))
        except (TypeError, ValueError) as e:
            _fail(f"masks[{i}] invalid: {e}", image_id)
    return SegmentResponse(image_id=image_id, masks=tuple(masks))


def parse_ping_response(obj: object) -> PingResponse:
    _check_error_reply(obj, None)
    assert isinstance(obj, dict)
    ok = obj.get("ok")
    if ok is not True:
        _fail(f"ping reply must have ok=true, got {ok!r}")
    caps = obj.get("capabilities")
    if not isinstance(caps, list) or not all(isinstance(c, str) for c in caps):
        _fail("ping reply needs a list of string capabilities")
    info = {k: v for k, v in obj.items() if k not in ("ok", "capabilities")}
    return PingResponse(ok=True, capabilities=tuple(caps), info=info)


def _parse_pixel_boxes(raw: object, image_id: str | None) -> tuple[tuple[float, ...], ...]:
    if not isinstance(raw, list):
        _fail("field 'boxes' must be a list", image_id)
    boxes = []
    for i, rb in enumerate(raw):
        if not isinstance(rb, list) or len(rb) != 4:
            _fail(f"boxes[{i}] must be a list of 4 numbers", image_id)
        vals = []
        for v in rb:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                _fail(f"boxes[{i}] coordinate must be a number, got {v!r}", image_id)
            vals.append(float(v))
        x0, y0, x1, y1 = vals
        if x1 < x0 or y1 < y0:
            _fail(f"boxes[{i}] corners out of order: {vals}", image_id)
        boxes.append((x0, y0, x1, y1))
    return tuple(boxes)


def parse_request(obj: object) -> str | DetectRequest | SegmentRequest:
    """Server-side request validation; returns "ping" or a typed request."""
    if not isinstance(obj, dict):
        _fail(f"request must be a JSON object, got {type(obj).__name__}")
    assert isinstance(obj, dict)
    op = obj.get("op")
    if op == "ping":
        return "ping"
    if op == "detect":
        image_id = _get_str(obj, "image_id")
        return DetectRequest(
            image_id=image_id,
            image_path=_get_str(obj, "image_path", image_id),
            prompt=_get_str(obj, "prompt", image_id),
            box_threshold=_get_num(obj, "box_threshold", 0.0, 1.0, image_id),
            text_threshold=_get_num(obj, "text_threshold", 0.0, 1.0, image_id),
        )
    if op == "segment":
        image_id = _get_str(obj, "image_id")
        return SegmentRequest(
            image_id=image_id,
            image_path=_get_str(obj, "image_path", image_id),
            boxes=_parse_pixel_boxes(obj.get("boxes"), image_id),  # type: ignore[arg-type]
        )
    _fail(f"unknown op {op!r}")
    raise AssertionError("unreachable")


# --------------------------------------------------------------------------
# Server half


class BackendHandler(Protocol):
    """What a backend implementation provides to serve_loop."""

    def capabilities(self) -> Sequence[str]: ...

    def info(self) -> dict: ...

    def handle_detect(self, request: DetectRequest) -> Sequence[WireDetection]: ...

    def handle_segment(self, request: SegmentRequest) -> Sequence[MaskRLE]: ...


def _error_wire(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def _dispatch(handler: BackendHandler, obj: object) -> dict:
    try:
        req = parse_request(obj)
    except SchemaError as e:
        return _error_wire("bad-request", str(e))
    caps = tuple(handler.capabilities())
    try:
        if req == "ping":
            reply = {"ok": True, "capabilities": list(caps)}
            reply.update(handler.info())
            return reply
        if isinstance(req, DetectRequest):
            if "detect" not in caps:
                return _error_wire("unsupported-op", "backend does not detect")
            dets = handler.handle_detect(req)
            return {
                "image_id": req.image_id,
                "detections": [d.to_wire() for d in dets],
            }
        assert isinstance(req, SegmentRequest)
        if "segment" not in caps:
            return _error_wire("unsupported-op", "backend does not segment")
        masks = handler.handle_segment(req)
        return {"image_id": req.image_id, "masks": [m.to_wire() for m in masks]}
    except FileNotFoundError as e:
        return _error_wire("not-found", str(e))
    except Exception as e:  # a bad request must never kill the server
        return _error_wire("internal", f"{type(e).__name__}: {e}")


def handle_line(handler: BackendHandler, line: str) -> str:
    """Process one NDJSON request line and return the reply line (no newline)."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        return json.dumps(_error_wire("bad-json", str(e)))
    return json.dumps(_dispatch(handler, obj))


def serve_loop(handler: BackendHandler, stdin: IO[str] | None = None, stdout: IO[str] | None = None) -> None:
    """Serve NDJSON requests until EOF on stdin."""
    fin = stdin if stdin is not None else sys.stdin
    fout = stdout if stdout is not None else sys.stdout
    for line in fin:
        line = line.strip()
        if not line:
            continue
        fout.write(handle_line(handler, line) + "\n")
        fout.flush()


# --------------------------------------------------------------------------
# Client half


class Backend(Protocol):
    """Client-side view of a backend, regardless of transport."""

    def ping(self) -> PingResponse: ...

    def detect(self, request: DetectRequest) -> DetectResponse: ...

    def segment(self, request: SegmentRequest) -> SegmentResponse: ...

    def restart(self) -> None: ...

    def close(self) -> None: ...


class _ValidatingBackend:
    """Shared parse layer; subclasses provide the raw dict round trip."""

    def _roundtrip(self, payload: dict) -> object:
        raise NotImplementedError

    def request_raw(self, payload: dict) -> object:
        """Send an arbitrary request object; returns the unvalidated reply.

        For probing error behavior; normal traffic should use the typed
        methods.
        """
        return self._roundtrip(payload)

    def ping(self) -> PingResponse:
        return parse_ping_response(self._roundtrip({"op": "ping"}))

    def detect(self, request: DetectRequest) -> DetectResponse:
        return parse_detect_response(self._roundtrip(request.to_wire()), request)

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        return parse_segment_response(self._roundtrip(request.to_wire()), request)

    def restart(self) -> None:
        pass

    def close(self) -> None:
        pass


class InProcessBackend(_ValidatingBackend):
    """Runs a handler in-process but through the full JSON wire path."""

    def __init__(self, handler: BackendHandler):
        self._handler = handler

    def _roundtrip(self, payload: dict) -> object:
        reply = handle_line(self._handler, json.dumps(payload))
        return json.loads(reply)

    def request_raw_line(self, line: str) -> object:
        """Push a raw (possibly malformed) request line through the server."""
        return json.loads(handle_line(self._handler, line))


class BackendClient(_ValidatingBackend):
    """Talks the NDJSON protocol to a backend subprocess.

    The command can be a pre-split argv or a shell-style string. The child's
    stderr is inherited so backend diagnostics stay visible. Replies are
    awaited with a timeout; a late, dead, or garbled backend raises
    TransportError, after which restart() gives a fresh process.
    """

    def __init__(self, cmd: Sequence[str] | str, timeout: float = DEFAULT_TIMEOUT_S, name: str = "backend"):
        self.cmd: list[str] = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        if not self.cmd:
            raise ValueError("backend command is empty")
        self.timeout = timeout
        self.name = name
        self._proc: subprocess.Popen[bytes] | None = None
        self._rbuf = bytearray()

    def _ensure_started(self) -> subprocess.Popen[bytes]:
        if self._proc is None or self._proc.poll() is not None:
            # bufsize=0 keeps all pending bytes in the kernel pipe so that
            # select() readiness is trustworthy.
            self._proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                bufsize=0,
            )
            self._rbuf = bytearray()
        return self._proc

    def _write_line(self, proc: subprocess.Popen[bytes], payload: dict) -> None:
        self._write_bytes(proc, (json.dumps(payload) + "\n").encode("utf-8"))

    def _write_bytes(self, proc: subprocess.Popen[bytes], data: bytes) -> None:
        assert proc.stdin is not None
        try:
            view = memoryview(data)
            while view:
                n = proc.stdin.write(view)
                view = view[n or 0:]
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise TransportError(f"{self.name}: cannot write request: {e}") from e

    def _read_line(self, proc: subprocess.Popen[bytes]) -> bytes:
        assert proc.stdout is not None
        fd = proc.stdout.fileno()
        deadline = time.monotonic() + self.timeout
        while True:
            nl = self._rbuf.find(b"\n")
            if nl >= 0:
                line = bytes(self._rbuf[:nl])
                del self._rbuf[: nl + 1]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportError(f"{self.name}: no reply within {self.timeout:.0f}s")
            ready, _, _ = select.select([fd], [], [], min(remaining, 0.5))
            if not ready:
                if proc.poll() is not None:
                    raise TransportError(f"{self.name}: process exited (code {proc.returncode})")
                continue
            chunk = os.read(fd, 65536)
            if chunk == b"":
                raise TransportError(f"{self.name}: process closed stdout")
            self._rbuf.extend(chunk)

    def _roundtrip(self, payload: dict) -> object:
        proc = self._ensure_started()
        self._write_line(proc, payload)
        return self._read_reply(proc)

    def _read_reply(self, proc: subprocess.Popen[bytes]) -> object:
        line = self._read_line(proc)
        try:
            return json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise TransportError(f"{self.name}: reply is not valid JSON: {e}") from e

    def request_raw_line(self, line: str) -> object:
        """Send a raw (possibly malformed) request line; for probing only."""
        if "\n" in line:
            raise ValueError("raw request line must not contain newlines")
        proc = self._ensure_started()
        self._write_bytes(proc, (line + "\n").encode("utf-8"))
        return self._read_reply(proc)

    def restart(self) -> None:
        self.close()
        self._ensure_started()

    def close(self) -> None:
        proc = self._proc
        self._proc = None
        self._rbuf = bytearray()
        if proc is None:
            return
        try:
            if proc.stdin is not None:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self) -> "BackendClient":
        self._ensure_started()
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
