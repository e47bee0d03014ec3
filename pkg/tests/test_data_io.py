import csv
import json

import numpy as np
import pytest
from PIL import Image

from segpipe.data_io import (
    METRICS_CSV_HEADER,
    CocoEntry,
    MetricsRow,
    PairingRule,
    coco_json_bytes,
    export_coco,
    import_coco,
    ingest,
    read_image_dims,
    read_mask,
    write_json_atomic,
    write_mask,
    write_metrics_csv,
)
from segpipe.geometry import ImageDims
from segpipe.mask import BinaryMask, rle_decode, rle_encode

from conftest import blob_mask, random_mask


class TestIngest:
    def test_pairs_by_stem(self, tmp_path):
        (tmp_path / "images").mkdir()
        (tmp_path / "gt").mkdir()
        for name in ("b.png", "a.jpg", "notes.txt"):
            (tmp_path / "images" / name).write_bytes(b"")
        write_mask(tmp_path / "gt" / "a.png", BinaryMask.empty(ImageDims(4, 4)))
        index = ingest(tmp_path / "images", tmp_path / "gt")
        assert index.image_ids == ("a", "b")
        assert index.get("a").gt_path is not None
        assert index.get("b").gt_path is None
        with pytest.raises(KeyError):
            index.get("missing")

    def test_no_gt_dir(self, tmp_path):
        (tmp_path / "x.png").write_bytes(b"")
        index = ingest(tmp_path)
        assert index.get("x").gt_path is None

    def test_duplicate_stems_rejected(self, tmp_path):
        (tmp_path / "a.png").write_bytes(b"")
        (tmp_path / "a.jpg").write_bytes(b"")
        with pytest.raises(ValueError):
            ingest(tmp_path)

    def test_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ingest(tmp_path / "nope")

    def test_pairing_rule_suffix(self, tmp_path):
        (tmp_path / "images").mkdir()
        (tmp_path / "gt").mkdir()
        (tmp_path / "images" / "a.png").write_bytes(b"")
        write_mask(tmp_path / "gt" / "a_mask.png", BinaryMask.empty(ImageDims(4, 4)))
        rule = PairingRule(mask_suffix="_mask")
        index = ingest(tmp_path / "images", tmp_path / "gt", rule)
        assert index.get("a").gt_path is not None
        assert index.get("a").gt_path.name == "a_mask.png"


class TestMaskFiles:
    def test_round_trip(self, tmp_path, rng):
        for i in range(20):
            mask = random_mask(rng, rng.randint(1, 40), rng.randint(1, 40))
            path = tmp_path / f"m{i}.png"
            write_mask(path, mask)
            assert read_mask(path) == mask

    def test_binarization_threshold(self, tmp_path):
        arr = np.array([[0, 100, 127], [128, 200, 255]], dtype=np.uint8)
        path = tmp_path / "gray.png"
        Image.fromarray(arr, mode="L").save(path)
        mask = read_mask(path)
        assert mask.data.tolist() == [[False, False, False], [True, True, True]]

    def test_mode_1_accepted(self, tmp_path):
        path = tmp_path / "bw.png"
        Image.new("1", (3, 2), color=1).save(path)
        assert read_mask(path) == BinaryMask.full(ImageDims(3, 2))

    def test_rgb_rejected(self, tmp_path):
        path = tmp_path / "rgb.png"
        Image.new("RGB", (3, 2)).save(path)
        with pytest.raises(ValueError):
            read_mask(path)

    def test_read_image_dims(self, tmp_path):
        path = tmp_path / "img.png"
        Image.new("RGB", (123, 45)).save(path)
        assert read_image_dims(path) == ImageDims(123, 45)


class TestCocoExport:
    def _entries(self):
        dims = ImageDims(16, 12)
        return [
            CocoEntry(
                image_id="a",
                file_name="a.png",
                dims=dims,
                class_name="lesion",
                rle=rle_encode(blob_mask(dims, 2, 2, 6, 5)),
            ),
            CocoEntry(
                image_id="b",
                file_name="b.png",
                dims=dims,
                class_name="lesion",
                rle=rle_encode(BinaryMask.empty(dims)),
            ),
        ]

    def test_structure(self):
        coco = export_coco(self._entries())
        assert {img["file_name"] for img in coco["images"]} == {"a.png", "b.png"}
        assert coco["categories"] == [{"id": 1, "name": "lesion"}]
        # Empty mask contributes no annotation but keeps its image listed.
        assert len(coco["annotations"]) == 1
        ann = coco["annotations"][0]
        assert ann["area"] == 12
        assert ann["bbox"] == [2.0, 2.0, 4.0, 3.0]
        assert ann["iscrowd"] == 0

    def test_deterministic_bytes(self):
        a = coco_json_bytes(export_coco(self._entries()))
        b = coco_json_bytes(export_coco(list(reversed(self._entries()))))
        assert a == b

    def test_conflicting_image_metadata_rejected(self):
        dims = ImageDims(16, 12)
        entries = self._entries() + [
            CocoEntry(
                image_id="a",
                file_name="a.png",
                dims=ImageDims(99, 99),
                class_name="other",
                rle=rle_encode(BinaryMask.empty(ImageDims(99, 99))),
            )
        ]
        with pytest.raises(ValueError):
            export_coco(entries)

    def test_round_trip(self, rng):
        dims = ImageDims(20, 14)
        entries = []
        for i in range(5):
            for cls in ("lesion", "scar"):
                entries.append(
                    CocoEntry(
                        image_id=f"img{i}",
                        file_name=f"img{i}.png",
                        dims=dims,
                        class_name=cls,
                        rle=rle_encode(random_mask(rng, dims.height, dims.width, 0.3)),
                    )
                )
        coco = json.loads(coco_json_bytes(export_coco(entries)).decode())
        back = import_coco(coco)
        original = {(e.image_id, e.class_name): rle_decode(e.rle) for e in entries}
        recovered = {(e.image_id, e.class_name): rle_decode(e.rle) for e in back}
        assert set(original) == set(recovered)
        for key in original:
            assert original[key] == recovered[key], key


class TestMetricsCsv:
    def test_exact_header_and_rows(self, tmp_path):
        rows = [
            MetricsRow(
                image_id="a",
                class_name="lesion",
                dice=0.9,
                hd=1.5,
                hd95=1.0,
                hce=4,
                n_raw=3,
                n_kept=2,
                n_rejected_area=1,
            )
        ]
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, rows)
        with open(path, newline="") as f:
            parsed = list(csv.reader(f))
        assert parsed[0] == list(METRICS_CSV_HEADER)
        assert parsed[0] == [
            "image_id", "class", "dice", "hd", "hd95", "hce", "n_raw", "n_kept", "n_rejected_area",
        ]
        assert parsed[1] == ["a", "lesion", "0.9", "1.5", "1.0", "4", "3", "2", "1"]


class TestAtomicJson:
    def test_writes_and_replaces(self, tmp_path):
        path = tmp_path / "out.json"
        write_json_atomic(path, {"v": 1})
        write_json_atomic(path, {"v": 2})
        assert json.loads(path.read_text()) == {"v": 2}
        leftovers = [p for p in tmp_path.iterdir() if p.name != "out.json"]
        assert leftovers == []

    def test_failure_leaves_no_temp(self, tmp_path):
        path = tmp_path / "out.json"
        with pytest.raises(TypeError):
            write_json_atomic(path, {"v": object()})
        assert list(tmp_path.iterdir()) == []
