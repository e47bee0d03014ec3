"""Box-prompted segmenters: real SAM and an intensity-threshold fallback.

Both take pixel-coordinate boxes and return one full-size boolean mask per
box, in order.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image


def otsu_threshold(values: np.ndarray) -> float:
    """Otsu's between-class variance maximizer over a 256-bin histogram."""
    hist, edges = np.histogram(values, bins=256, range=(0.0, 255.0))
    total = hist.sum()
    if total == 0:
        return 127.5
    centers = (edges[:-1] + edges[1:]) / 2.0
    weight_bg = np.cumsum(hist)
    weight_fg = total - weight_bg
    sum_bg = np.cumsum(hist * centers)
    sum_total = sum_bg[-1]
    valid = (weight_bg > 0) & (weight_fg > 0)
    if not valid.any():
        return float(centers[len(centers) // 2])
    mean_bg = np.where(valid, sum_bg / np.maximum(weight_bg, 1), 0.0)
    mean_fg = np.where(valid, (sum_total - sum_bg) / np.maximum(weight_fg, 1), 0.0)
    variance = weight_bg * weight_fg * (mean_bg - mean_fg) ** 2
    variance[~valid] = -1.0
    return float(centers[int(np.argmax(variance))])


def _clip_box(box: tuple[float, float, float, float], width: int, height: int) -> tuple[int, int, int, int]:
    x0, y0, x1, y1 = box
    xi0 = min(width, max(0, math.floor(x0)))
    yi0 = min(height, max(0, math.floor(y0)))
    xi1 = min(width, max(xi0, math.ceil(x1)))
    yi1 = min(height, max(yi0, math.ceil(y1)))
    return xi0, yi0, xi1, yi1


class HeuristicSegmenter:
    """Box-constrained Otsu thresholding used when no weights are available.

    The crop is split at its Otsu level; the object is taken to be the side
    underrepresented on the crop border, since a box prompt frames the object
    with background touching the edges. A uniform crop degrades to filling
    the whole box.
    """

    name = "heuristic-otsu"

    def segment(self, image_path: str, boxes: list) -> list[np.ndarray]:
        img = Image.open(image_path).convert("L")
        gray = np.asarray(img, dtype=np.float64)
        height, width = gray.shape
        masks: list[np.ndarray] = []
        for box in boxes:
            mask = np.zeros((height, width), dtype=bool)
            x0, y0, x1, y1 = _clip_box(tuple(box), width, height)
            crop = gray[y0:y1, x0:x1]
            if crop.size:
                masks.append(self._fill(mask, crop, x0, y0))
            else:
                masks.append(mask)
        return masks

    @staticmethod
    def _fill(mask: np.ndarray, crop: np.ndarray, x0: int, y0: int) -> np.ndarray:
        h, w = crop.shape
        if crop.max() == crop.min():
            mask[y0 : y0 + h, x0 : x0 + w] = True
            return mask
        level = otsu_threshold(crop)
        above = crop > level
        border = np.zeros_like(above)
        border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
        # Majority side of the border is background.
        if above[border].mean() > 0.5:
            region = ~above
        else:
            region = above
        mask[y0 : y0 + h, x0 : x0 + w] = region
        return mask

    def info(self) -> dict:
        return {"segmenter_model": self.name, "binarization": "otsu-per-box"}


class SamSegmenter:
    """Box-prompted segmenter wrapping a SAM checkpoint.

    Imports torch lazily so the package works without the models extra.
    Mask logits are binarized at the predictor's default threshold, which is
    reported through ping metadata.
    """

    def __init__(self, weights: Path, model_type: str, device: str) -> None:
        try:
            from segment_anything import SamPredictor, sam_model_registry
        except ImportError as exc:  # pragma: no cover - needs the models extra
            raise RuntimeError(
                "SAM is not installed; pip install 'model-backend[models]'"
            ) from exc
        sam = sam_model_registry[model_type](checkpoint=str(weights))
        sam.to(device)
        self.predictor = SamPredictor(sam)
        self.weights = Path(weights)
        self.model_type = model_type
        self.mask_threshold = float(getattr(sam, "mask_threshold", 0.0))

    def segment(self, image_path: str, boxes: list) -> list[np.ndarray]:  # pragma: no cover - needs weights
        image = np.asarray(Image.open(image_path).convert("RGB"))
        self.predictor.set_image(image)
        masks: list[np.ndarray] = []
        for box in boxes:
            pred, _, _ = self.predictor.predict(
                box=np.asarray(box, dtype=np.float64), multimask_output=False
            )
            masks.append(np.asarray(pred[0], dtype=bool))
        return masks

    def info(self) -> dict:
        return {
            "segmenter_model": f"sam-{self.model_type}",
            "segmenter_weights": self.weights.name,
            "mask_threshold": self.mask_threshold,
        }
