import random

import numpy as np
import pytest

from segpipe.geometry import ImageDims
from segpipe.mask import BinaryMask


def random_mask(rng: random.Random, height: int, width: int, p: float = 0.3) -> BinaryMask:
    data = np.array(
        [[rng.random() < p for _ in range(width)] for _ in range(height)], dtype=bool
    )
    return BinaryMask(data)


def blob_mask(dims: ImageDims, x0: int, y0: int, x1: int, y1: int) -> BinaryMask:
    data = np.zeros((dims.height, dims.width), dtype=bool)
    data[y0:y1, x0:x1] = True
    return BinaryMask(data)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)
