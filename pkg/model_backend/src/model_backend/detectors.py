"""Text-prompted detectors: real Grounding DINO and a heuristic fallback.

Both return normalized xyxy boxes with a confidence and the matched phrase,
already filtered by the caller-supplied box and text thresholds.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage


@dataclass(frozen=True)
class RawDetection:
    box: tuple[float, float, float, float]  # normalized xyxy
    confidence: float
    phrase: str

    def to_wire(self) -> dict:
        return {
            "box": [round(c, 6) for c in self.box],
            "confidence": round(self.confidence, 6),
            "phrase": self.phrase,
        }


def cxcywh_to_xyxy(box: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
    """Normalized center format to normalized corner format, clamped to [0, 1]."""
    cx, cy, w, h = box
    corners = (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    x0, y0, x1, y1 = (min(1.0, max(0.0, v)) for v in corners)
    return x0, y0, x1, y1


def _load_rgb(image_path: str, max_side: int) -> Image.Image:
    img = Image.open(image_path).convert("RGB")
    longest = max(img.size)
    if longest > max_side:
        scale = max_side / longest
        img = img.resize(
            (max(1, round(img.width * scale)), max(1, round(img.height * scale))),
            Image.NEAREST,
        )
    return img


# Hue in PIL's HSV mode spans 0..255 for 0..360 degrees. Each term maps to
# hue windows plus saturation/value bands; None means the axis is ignored.
_COLOR_BANDS: dict[str, tuple[tuple[tuple[int, int], ...] | None, tuple[int, int], tuple[int, int]]] = {
    "brown": (((6, 30),), (60, 255), (40, 200)),
    "red": (((0, 6), (245, 255)), (100, 255), (60, 255)),
    "yellow": (((30, 50),), (100, 255), (120, 255)),
    "green": (((50, 120),), (60, 255), (40, 255)),
    "blue": (((140, 190),), (60, 255), (50, 255)),
    "white": (None, (0, 45), (200, 255)),
    "gray": (None, (0, 45), (61, 199)),
    "black": (None, (0, 255), (0, 60)),
}
_ALIASES = {"grey": "gray", "dark": "black", "bright": "white"}

MIN_COMPONENT_PX = 16
_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def lexicon_terms(prompt: str) -> list[str]:
    """Color words of the prompt, canonicalized, in first-appearance order."""
    seen: list[str] = []
    for word in re.findall(r"[a-z]+", prompt.lower()):
        term = _ALIASES.get(word, word)
        if term in _COLOR_BANDS and term not in seen:
            seen.append(term)
    return seen


def _band_mask(hsv: np.ndarray, term: str) -> np.ndarray:
    hues, (s_lo, s_hi), (v_lo, v_hi) = _COLOR_BANDS[term]
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    mask = (s >= s_lo) & (s <= s_hi) & (v >= v_lo) & (v <= v_hi)
    if hues is not None:
        in_hue = np.zeros_like(mask)
        for lo, hi in hues:
            in_hue |= (h >= lo) & (h <= hi)
        mask &= in_hue
    return mask


class HeuristicDetector:
    """Deterministic color-lexicon detector used when no weights are available.

    Pixels matching the color words of the prompt are grouped into connected
    components; each component becomes a detection whose confidence is the
    component's fill density inside its own bounding box. Lexicon matches are
    exact, so the text threshold never rejects them.
    """

    name = "heuristic-color-lexicon"

    def __init__(self, max_side: int) -> None:
        self.max_side = max_side

    def detect(self, image_path: str, prompt: str, box_threshold: float, text_threshold: float) -> list[RawDetection]:
        img = _load_rgb(image_path, self.max_side)
        terms = lexicon_terms(prompt)
        if not terms:
            return []
        hsv = np.asarray(img.convert("HSV"))
        width, height = img.size
        out: list[RawDetection] = []
        for term in terms:
            labels, n = ndimage.label(_band_mask(hsv, term), structure=_EIGHT_CONNECTED)
            for index in range(1, n + 1):
                ys, xs = np.nonzero(labels == index)
                area = ys.size
                if area < MIN_COMPONENT_PX:
                    continue
                x0, x1 = int(xs.min()), int(xs.max()) + 1
                y0, y1 = int(ys.min()), int(ys.max()) + 1
                confidence = area / ((x1 - x0) * (y1 - y0))
                if confidence < box_threshold:
                    continue
                out.append(
                    RawDetection(
                        box=(x0 / width, y0 / height, x1 / width, y1 / height),
                        confidence=confidence,
                        phrase=term,
                    )
                )
        out.sort(key=lambda d: (-d.confidence, d.phrase, d.box))
        return out

    def info(self) -> dict:
        return {
            "detector_model": self.name,
            "lexicon": sorted(_COLOR_BANDS),
        }


class GroundingDinoDetector:
    """Open-set detector wrapping Grounding DINO checkpoints.

    Imports torch lazily so the package works without the models extra.
    The model emits normalized center-format boxes; they are converted to
    normalized xyxy here so the wire sees a single convention.
    """

    def __init__(self, weights: Path, config: Path | None, device: str, max_side: int) -> None:
        try:
            from groundingdino.util.inference import load_image, load_model, predict
        except ImportError as exc:  # pragma: no cover - needs the models extra
            raise RuntimeError(
                "Grounding DINO is not installed; pip install 'model-backend[models]'"
            ) from exc
        self._load_image = load_image
        self._predict = predict
        self.device = device
        self.max_side = max_side
        self.weights = Path(weights)
        default_cfg = Path(weights).with_suffix(".py")
        self.model = load_model(str(config or default_cfg), str(weights), device=device)

    def detect(self, image_path: str, prompt: str, box_threshold: float, text_threshold: float) -> list[RawDetection]:  # pragma: no cover - needs weights
        _, tensor = self._load_image(image_path)
        boxes, logits, phrases = self._predict(
            model=self.model,
            image=tensor,
            caption=prompt,
            box_threshold=box_threshold,
            text_threshold=text_threshold,
            device=self.device,
        )
        out = []
        for box, logit, phrase in zip(boxes.tolist(), logits.tolist(), phrases):
            out.append(
                RawDetection(
                    box=cxcywh_to_xyxy(tuple(box)),
                    confidence=min(1.0, max(0.0, float(logit))),
                    phrase=str(phrase),
                )
            )
        out.sort(key=lambda d: (-d.confidence, d.phrase, d.box))
        return out

    def info(self) -> dict:
        return {
            "detector_model": "grounding-dino",
            "detector_weights": self.weights.name,
        }
