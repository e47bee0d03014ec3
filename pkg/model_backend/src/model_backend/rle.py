"""Column-major run-length encoding of binary masks for the wire."""

from __future__ import annotations

from itertools import groupby

import numpy as np


def encode(mask: np.ndarray) -> dict:
    """Boolean (H, W) array to ``{"size": [H, W], "counts": [...]}``.

    Counts alternate background/foreground runs starting with background;
    a leading 0 marks a mask whose first column-major pixel is foreground.
    Counts always sum to H*W.
    """
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape
    flat = np.asarray(mask, dtype=bool).flatten(order="F")
    counts: list[int] = []
    if flat.size and flat[0]:
        counts.append(0)
    for _, run in groupby(flat.tolist()):
        counts.append(sum(1 for _ in run))
    if not counts:
        counts = [0]
    return {"size": [h, w], "counts": counts}
