"""Dataset discovery, mask file I/O, COCO-style export, metrics CSV."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .geometry import ImageDims
from .mask import BinaryMask, MaskRLE, rle_decode, rle_encode

__all__ = [
    "IMAGE_EXTS",
    "METRICS_CSV_HEADER",
    "PairingRule",
    "DatasetItem",
    "DatasetIndex",
    "ingest",
    "read_mask",
    "write_mask",
    "read_image_dims",
    "CocoEntry",
    "export_coco",
    "import_coco",
    "coco_json_bytes",
    "MetricsRow",
    "write_metrics_csv",
    "write_json_atomic",
]

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")

METRICS_CSV_HEADER = (
    "image_id",
    "class",
    "dice",
    "hd",
    "hd95",
    "hce",
    "n_raw",
    "n_kept",
    "n_rejected_area",
)


# --------------------------------------------------------------------------
# Dataset discovery


@dataclass(frozen=True)
class PairingRule:
    """How a ground-truth mask file is named after an image stem."""

    mask_suffix: str = ""
    mask_ext: str = ".png"

    def mask_name(self, stem: str) -> str:
        return f"{stem}{self.mask_suffix}{self.mask_ext}"


@dataclass(frozen=True)
class DatasetItem:
    image_id: str
    image_path: Path
    gt_path: Path | None


@dataclass(frozen=True)
class DatasetIndex:
    items: tuple[DatasetItem, ...]

    @property
    def image_ids(self) -> tuple[str, ...]:
        return tuple(item.image_id for item in self.items)

    def get(self, image_id: str) -> DatasetItem:
        for item in self.items:
            if item.image_id == image_id:
                return item
        raise KeyError(image_id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def ingest(
    images_dir: str | Path,
    gt_dir: str | Path | None = None,
    rule: PairingRule = PairingRule(),
) -> DatasetIndex:
    """Index a directory of images, pairing ground truth by file stem.

    The image stem is the image id, so two images that differ only in
    extension would collide silently; that is rejected instead.
    """
    images_dir = Path(images_dir)
    if not images_dir.is_dir():
        raise FileNotFoundError(f"images directory not found: {images_dir}")
    by_stem: dict[str, Path] = {}
    duplicates: list[str] = []
    for path in sorted(images_dir.iterdir()):
        if not path.is_file() or path.suffix.lower() not in IMAGE_EXTS:
            continue
        if path.stem in by_stem:
            duplicates.append(path.stem)
        by_stem[path.stem] = path
    if duplicates:
        raise ValueError(
            f"duplicate image stems (ids must be unique): {sorted(set(duplicates))}"
        )
    gt_root = Path(gt_dir) if gt_dir is not None else None
    items = []
    for stem in sorted(by_stem):
        gt_path = None
        if gt_root is not None:
            candidate = gt_root / rule.mask_name(stem)
            if candidate.is_file():
                gt_path = candidate
        items.append(DatasetItem(image_id=stem, image_path=by_stem[stem], gt_path=gt_path))
    return DatasetIndex(items=tuple(items))


# --------------------------------------------------------------------------
# Mask and image files


def read_mask(path: str | Path) -> BinaryMask:
    """Load a grayscale PNG as a binary mask (foreground where value > 127).

    Multi-channel images are rejected rather than guessed at.
    """
    with Image.open(path) as img:
        if img.mode == "1":
            return BinaryMask(np.asarray(img, dtype=bool))
        if img.mode == "L":
            return BinaryMask(np.asarray(img) > 127)
        raise ValueError(
            f"mask {path} has mode {img.mode!r}; expected single-channel grayscale"
        )


def write_mask(path: str | Path, mask: BinaryMask) -> None:
    """Write a binary mask as an 8-bit PNG with foreground 255."""
    arr = mask.data.astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(path)


def read_image_dims(path: str | Path) -> ImageDims:
    """Image dimensions from the file header (no full decode)."""
    with Image.open(path) as img:
        w, h = img.size
    return ImageDims(w, h)


# --------------------------------------------------------------------------
# COCO-style export


@dataclass(frozen=True)
class CocoEntry:
    """One (image, class) mask destined for or recovered from COCO export."""

    image_id: str
    file_name: str
    dims: ImageDims
    class_name: str
    rle: MaskRLE


def export_coco(entries: Sequence[CocoEntry]) -> dict:
    """Build a COCO-style dict with uncompressed RLE segmentations.

    Output is fully determined by the entries: ids are assigned by sorted
    order and no timestamps or environment details are embedded, so equal
    inputs serialize to identical bytes. Empty masks produce no annotation;
    their image still appears in ``images``.
    """
    by_image: dict[str, tuple[str, ImageDims]] = {}
    for e in entries:
        prev = by_image.get(e.image_id)
        if prev is not None and prev != (e.file_name, e.dims):
            raise ValueError(f"conflicting image metadata for {e.image_id!r}")
        by_image[e.image_id] = (e.file_name, e.dims)
    image_ids = {image_id: i + 1 for i, image_id in enumerate(sorted(by_image))}
    class_names = sorted({e.class_name for e in entries})
    category_ids = {name: i + 1 for i, name in enumerate(class_names)}

    images = [
        {
            "id": image_ids[image_id],
            "file_name": by_image[image_id][0],
            "width": by_image[image_id][1].width,
            "height": by_image[image_id][1].height,
        }
        for image_id in sorted(by_image)
    ]
    categories = [{"id": category_ids[name], "name": name} for name in class_names]

    annotations = []
    ordered = sorted(entries, key=lambda e: (image_ids[e.image_id], category_ids[e.class_name]))
    for e in ordered:
        mask = rle_decode(e.rle)
        if mask.is_empty:
            continue
        bbox = mask.bbox()
        assert bbox is not None
        annotations.append(
            {
                "id": len(annotations) + 1,
                "image_id": image_ids[e.image_id],
                "category_id": category_ids[e.class_name],
                "segmentation": e.rle.to_wire(),
                "area": mask.count,
                "bbox": [bbox.x0, bbox.y0, bbox.width, bbox.height],
                "iscrowd": 0,
            }
        )
    return {
        "info": {"description": "prompt-driven annotation export"},
        "images": images,
        "categories": categories,
        "annotations": annotations,
    }


def coco_json_bytes(coco: dict) -> bytes:
    """Canonical serialization; equal dicts give equal bytes."""
    return (json.dumps(coco, indent=2, sort_keys=True) + "\n").encode("utf-8")


def import_coco(obj: Mapping) -> list[CocoEntry]:
    """Inverse of export_coco.

    Images with no annotation for a category come back as empty masks for
    every category present in the file, so a full export/import cycle
    reproduces each (image, class) mask exactly.
    """
    images = {img["id"]: img for img in obj["images"]}
    categories = {cat["id"]: cat["name"] for cat in obj["categories"]}
    masks: dict[tuple[int, int], BinaryMask] = {}
    for ann in obj["annotations"]:
        key = (ann["image_id"], ann["category_id"])
        mask = rle_decode(MaskRLE.from_wire(ann["segmentation"]))
        if key in masks:
            masks[key] = masks[key] | mask
        else:
            masks[key] = mask
    entries = []
    for img_id in sorted(images):
        img = images[img_id]
        dims = ImageDims(int(img["width"]), int(img["height"]))
        for cat_id in sorted(categories):
            mask = masks.get((img_id, cat_id), BinaryMask.empty(dims))
            entries.append(
                CocoEntry(
                    image_id=Path(img["file_name"]).stem,
                    file_name=img["file_name"],
                    dims=dims,
                    class_name=categories[cat_id],
                    rle=rle_encode(mask),
                )
            )
    return entries


# --------------------------------------------------------------------------
# Metrics CSV


@dataclass(frozen=True)
class MetricsRow:
    image_id: str
    class_name: str
    dice: float
    hd: float
    hd95: float
    hce: int
    n_raw: int
    n_kept: int
    n_rejected_area: int


def write_metrics_csv(path: str | Path, rows: Iterable[MetricsRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_CSV_HEADER)
        for r in rows:
            writer.writerow(
                [r.image_id, r.class_name, r.dice, r.hd, r.hd95, r.hce, r.n_raw, r.n_kept, r.n_rejected_area]
            )


# --------------------------------------------------------------------------
# Atomic JSON


def write_json_atomic(path: str | Path, obj: object, indent: int = 2) -> None:
    """Write JSON via a temp file and rename, so readers never see a torn file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(obj, f, indent=indent, sort_keys=False)
            f.write("\n")
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
