"""Deterministic synthetic datasets for exercising the pipeline end to end.

A scenario describes a set of images (dimensions plus rectangular ground
truth regions) and how a simulated detector behaves on them: true positives
are the ground-truth boxes with bounded corner jitter and mid-range
confidence, false positives are large boxes with a chosen relative-area
range and confidence that overlaps or exceeds the true positives'. This
mirrors the failure mode the area filter exists for: oversized spurious
boxes that often carry high confidence, including a full-image box.

Everything derives from ``random.Random(f"{seed}|{image_id}")``, so any
image can be synthesized independently of the others and results are stable
across processes and platforms.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import BBox, ImageDims
from .mask import BinaryMask
from .protocol import WireDetection

__all__ = [
    "SyntheticImage",
    "SyntheticScenario",
    "DEFAULT_GT_REL_AREA_RANGE",
    "DEFAULT_ASPECT_RANGE",
    "derive_image",
    "build_scenario",
    "synthesize_detections",
    "gt_mask_for",
    "generate_dataset",
]


@dataclass(frozen=True)
class SyntheticImage:
    dims: ImageDims
    gt_boxes: tuple[BBox, ...]


@dataclass(frozen=True)
class SyntheticScenario:
    """Full description of a synthetic dataset and its simulated detector."""

    seed: int
    prompt: str = "target patch"
    n_fp: int = 2
    fp_area_range: tuple[float, float] = (0.5, 1.0)
    fp_conf_range: tuple[float, float] = (0.3, 0.9)
    tp_conf_range: tuple[float, float] = (0.2, 0.45)
    tp_jitter_px: float = 1.5
    include_full_image_fp: bool = True
    target_present: bool = True
    images: dict[str, SyntheticImage] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "prompt": self.prompt,
            "n_fp": self.n_fp,
            "fp_area_range": list(self.fp_area_range),
            "fp_conf_range": list(self.fp_conf_range),
            "tp_conf_range": list(self.tp_conf_range),
            "tp_jitter_px": self.tp_jitter_px,
            "include_full_image_fp": self.include_full_image_fp,
            "target_present": self.target_present,
            "images": {
                image_id: {
                    "dims": [img.dims.width, img.dims.height],
                    "gt_boxes": [list(b.as_tuple()) for b in img.gt_boxes],
                }
                for image_id, img in self.images.items()
            },
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticScenario":
        images = {}
        for image_id, spec in obj["images"].items():
            w, h = spec["dims"]
            images[image_id] = SyntheticImage(
                dims=ImageDims(int(w), int(h)),
                gt_boxes=tuple(BBox(*(float(v) for v in b)) for b in spec["gt_boxes"]),
            )
        return cls(
            seed=int(obj["seed"]),
            prompt=obj.get("prompt", "target patch"),
            n_fp=int(obj.get("n_fp", 2)),
            fp_area_range=tuple(obj.get("fp_area_range", (0.5, 1.0))),
            fp_conf_range=tuple(obj.get("fp_conf_range", (0.3, 0.9))),
            tp_conf_range=tuple(obj.get("tp_conf_range", (0.2, 0.45))),
            tp_jitter_px=float(obj.get("tp_jitter_px", 1.5)),
            include_full_image_fp=bool(obj.get("include_full_image_fp", True)),
            target_present=bool(obj.get("target_present", True)),
            images=images,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticScenario":
        return cls.from_dict(json.loads(text))


def _rng_for(seed: int, image_id: str) -> random.Random:
    # String seeding hashes with SHA-512 internally, so streams are stable
    # across processes (unlike hash()-based seeding).
    return random.Random(f"{seed}|{image_id}")


def _uniform_below(rng: random.Random, lo: float, hi: float) -> float:
    """Uniform draw guaranteed strictly below hi."""
    v = lo + (hi - lo) * rng.random()
    while v >= hi:
        v = lo + (hi - lo) * rng.random()
    return v


DEFAULT_GT_REL_AREA_RANGE = (0.02, 0.08)
DEFAULT_ASPECT_RANGE = (0.6, 1.6)


def derive_image(
    seed: int,
    image_id: str,
    dims: ImageDims,
    gt_rel_area_range: tuple[float, float] = DEFAULT_GT_REL_AREA_RANGE,
    aspect_range: tuple[float, float] = DEFAULT_ASPECT_RANGE,
) -> SyntheticImage:
    """One rectangular ground-truth region, derived from (seed, image_id).

    Independent of any other image, so a backend that only sees one image at
    a time reconstructs exactly what build_scenario put in the dataset.
    """
    rng = random.Random(f"{seed}|gt|{image_id}")
    area = rng.uniform(*gt_rel_area_range) * dims.area
    aspect = rng.uniform(*aspect_range)
    w = max(4, round((area * aspect) ** 0.5))
    h = max(4, round((area / aspect) ** 0.5))
    w = min(w, dims.width - 2)
    h = min(h, dims.height - 2)
    x0 = rng.randint(1, dims.width - w - 1)
    y0 = rng.randint(1, dims.height - h - 1)
    box = BBox(float(x0), float(y0), float(x0 + w), float(y0 + h))
    return SyntheticImage(dims=dims, gt_boxes=(box,))


def build_scenario(
    seed: int,
    n_images: int,
    width: int = 192,
    height: int = 192,
    gt_rel_area_range: tuple[float, float] = DEFAULT_GT_REL_AREA_RANGE,
    aspect_range: tuple[float, float] = DEFAULT_ASPECT_RANGE,
    **overrides,
) -> SyntheticScenario:
    """Create a scenario with one ground-truth region per image.

    Keyword overrides pass through to SyntheticScenario (n_fp, conf ranges,
    target_present, and so on).
    """
    dims = ImageDims(width, height)
    images = {
        f"synth-{i:04d}": derive_image(
            seed, f"synth-{i:04d}", dims, gt_rel_area_range, aspect_range
        )
        for i in range(n_images)
    }
    return SyntheticScenario(seed=seed, images=images, **overrides)


def synthesize_detections(scenario: SyntheticScenario, image_id: str) -> list[WireDetection]:
    """Simulated raw detector output for one image, unfiltered.

    Returns normalized-coordinate detections sorted by confidence
    descending. Deterministic in (scenario.seed, image_id).
    """
    img = scenario.images[image_id]
    dims = img.dims
    rng = _rng_for(scenario.seed, image_id)
    dets: list[WireDetection] = []

    if scenario.target_present:
        j = scenario.tp_jitter_px
        lo, hi = scenario.tp_conf_range
        for gt in img.gt_boxes:
            x0 = min(max(gt.x0 + rng.uniform(-j, j), 0.0), dims.width)
            y0 = min(max(gt.y0 + rng.uniform(-j, j), 0.0), dims.height)
            x1 = min(max(gt.x1 + rng.uniform(-j, j), x0), dims.width)
            y1 = min(max(gt.y1 + rng.uniform(-j, j), y0), dims.height)
            # Strictly below the range top so a confidence cut at the top
            # boundary never keeps a true positive.
            conf = _uniform_below(rng, lo, hi)
            dets.append(
                WireDetection(
                    box=(x0 / dims.width, y0 / dims.height, x1 / dims.width, y1 / dims.height),
                    confidence=conf,
                    phrase=scenario.prompt,
                )
            )

    a_lo, a_hi = scenario.fp_area_range
    c_lo, c_hi = scenario.fp_conf_range
    for _ in range(scenario.n_fp):
        area = rng.uniform(a_lo, min(a_hi, 1.0))
        w = rng.uniform(area, 1.0)
        h = area / w
        x0 = rng.uniform(0.0, 1.0 - w)
        y0 = rng.uniform(0.0, 1.0 - h)
        dets.append(
            WireDetection(
                box=(x0, y0, x0 + w, y0 + h),
                confidence=rng.uniform(c_lo, c_hi),
                phrase=scenario.prompt,
            )
        )

    if scenario.include_full_image_fp:
        # Pinned to the top of the range: the whole-image box is among the
        # most confident predictions, which is exactly why confidence alone
        # cannot separate it from real hits.
        dets.append(
            WireDetection(box=(0.0, 0.0, 1.0, 1.0), confidence=c_hi, phrase=scenario.prompt)
        )

    dets.sort(key=lambda d: -d.confidence)
    return dets


def gt_mask_for(scenario: SyntheticScenario, image_id: str) -> BinaryMask:
    """Ground-truth mask: the union of the image's rectangular regions."""
    img = scenario.images[image_id]
    mask = BinaryMask.empty(img.dims)
    for box in img.gt_boxes:
        mask = mask | BinaryMask.from_box(box, img.dims)
    return mask


def _render_image(img: SyntheticImage) -> np.ndarray:
    """Cosmetic RGB rendering: flat background with darker target rects."""
    h, w = img.dims.height, img.dims.width
    arr = np.full((h, w, 3), (168, 178, 162), dtype=np.uint8)
    for box in img.gt_boxes:
        x0, y0, x1, y1 = (int(round(v)) for v in box.as_tuple())
        arr[y0:y1, x0:x1] = (96, 64, 48)
    return arr


def generate_dataset(scenario: SyntheticScenario, out_dir: str | Path) -> Path:
    """Write images/, masks/ and scenario.json under out_dir.

    Images are cosmetic (the simulated detector never reads pixels) but have
    the declared dimensions, so anything that inspects the files sees a
    consistent dataset. Masks are 8-bit PNGs with foreground 255.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    for image_id, img in scenario.images.items():
        Image.fromarray(_render_image(img), mode="RGB").save(out / "images" / f"{image_id}.png")
        gt = gt_mask_for(scenario, image_id)
        Image.fromarray(gt.data.astype(np.uint8) * 255, mode="L").save(
            out / "masks" / f"{image_id}.png"
        )
    (out / "scenario.json").write_text(scenario.to_json(), encoding="utf-8")
    return out
