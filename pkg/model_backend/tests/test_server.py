import io
import json

from model_backend import __version__
from model_backend.server import handle_line, serve


def rpc(handler, obj) -> dict:
    return handle_line(handler, json.dumps(obj))


def error_code(reply) -> str:
    assert set(reply) == {"error"}
    assert isinstance(reply["error"]["message"], str)
    return reply["error"]["code"]


class TestPing:
    def test_shape(self, handler):
        reply = rpc(handler, {"op": "ping"})
        assert reply["ok"] is True
        assert reply["capabilities"] == ["detect", "segment"]
        assert reply["backend"] == "model-backend"
        assert reply["version"] == __version__
        assert reply["engine"] == "heuristic"
        assert reply["deterministic"] is True
        assert reply["max_side"] == 1024
        assert reply["detector_model"] == "heuristic-color-lexicon"
        assert reply["binarization"] == "otsu-per-box"


class TestErrorReplies:
    def test_bad_json(self, handler):
        assert error_code(handle_line(handler, "{nope")) == "bad-json"

    def test_non_object_request(self, handler):
        assert error_code(handle_line(handler, "[1, 2]")) == "bad-request"

    def test_unknown_op(self, handler):
        assert error_code(rpc(handler, {"op": "transmogrify"})) == "unsupported-op"

    def test_missing_op(self, handler):
        assert error_code(rpc(handler, {"image_id": "x"})) == "unsupported-op"

    def test_detect_missing_fields(self, handler):
        assert error_code(rpc(handler, {"op": "detect", "image_id": 42})) == "bad-request"

    def test_detect_threshold_out_of_range(self, handler, samples_dir):
        req = {
            "op": "detect",
            "image_id": "leaf",
            "image_path": str(samples_dir / "leaf.png"),
            "prompt": "brown",
            "box_threshold": 1.5,
        }
        assert error_code(rpc(handler, req)) == "bad-request"

    def test_detect_boolean_threshold_rejected(self, handler, samples_dir):
        req = {
            "op": "detect",
            "image_id": "leaf",
            "image_path": str(samples_dir / "leaf.png"),
            "prompt": "brown",
            "box_threshold": True,
        }
        assert error_code(rpc(handler, req)) == "bad-request"

    def test_detect_missing_image(self, handler, tmp_path):
        req = {
            "op": "detect",
            "image_id": "x",
            "image_path": str(tmp_path / "absent.png"),
            "prompt": "brown",
        }
        assert error_code(rpc(handler, req)) == "not-found"

    def test_segment_reversed_box(self, handler, samples_dir):
        req = {
            "op": "segment",
            "image_id": "leaf",
            "image_path": str(samples_dir / "leaf.png"),
            "boxes": [[50, 50, 10, 60]],
        }
        assert error_code(rpc(handler, req)) == "bad-request"

    def test_segment_bad_box_arity(self, handler, samples_dir):
        req = {
            "op": "segment",
            "image_id": "leaf",
            "image_path": str(samples_dir / "leaf.png"),
            "boxes": [[1, 2, 3]],
        }
        assert error_code(rpc(handler, req)) == "bad-request"


class TestDispatch:
    def test_detect_reply_schema(self, handler, samples_dir):
        req = {
            "op": "detect",
            "image_id": "leaf",
            "image_path": str(samples_dir / "leaf.png"),
            "prompt": "brown spot",
            "box_threshold": 0.2,
            "text_threshold": 0.2,
        }
        reply = rpc(handler, req)
        assert reply["image_id"] == "leaf"
        assert reply["detections"]
        for d in reply["detections"]:
            assert set(d) == {"box", "confidence", "phrase"}
            assert len(d["box"]) == 4

    def test_image_id_echoed_verbatim(self, handler, samples_dir):
        req = {
            "op": "detect",
            "image_id": 7,
            "image_path": str(samples_dir / "leaf.png"),
            "prompt": "brown",
        }
        assert rpc(handler, req)["image_id"] == 7

    def test_segment_zero_boxes(self, handler, samples_dir):
        req = {
            "op": "segment",
            "image_id": "leaf",
            "image_path": str(samples_dir / "leaf.png"),
            "boxes": [],
        }
        assert rpc(handler, req) == {"image_id": "leaf", "masks": []}

    def test_segment_mask_sizes_match_image(self, handler, samples_dir):
        req = {
            "op": "segment",
            "image_id": "coins",
            "image_path": str(samples_dir / "coins.png"),
            "boxes": [[30, 30, 90, 90], [130, 30, 175, 75]],
        }
        reply = rpc(handler, req)
        assert len(reply["masks"]) == 2
        for mask in reply["masks"]:
            assert mask["size"] == [192, 256]
            assert sum(mask["counts"]) == 192 * 256


class TestServeLoop:
    def test_ndjson_with_recovery(self, handler, samples_dir):
        lines = [
            json.dumps({"op": "ping"}),
            "",  # blank lines are skipped, not answered
            "garbage {",
            json.dumps(
                {
                    "op": "detect",
                    "image_id": "leaf",
                    "image_path": str(samples_dir / "leaf.png"),
                    "prompt": "brown spot",
                }
            ),
        ]
        stdout = io.StringIO()
        serve(handler, io.StringIO("\n".join(lines) + "\n"), stdout)
        replies = [json.loads(l) for l in stdout.getvalue().splitlines()]
        assert len(replies) == 3
        assert replies[0]["ok"] is True
        assert replies[1]["error"]["code"] == "bad-json"
        assert replies[2]["image_id"] == "leaf"
