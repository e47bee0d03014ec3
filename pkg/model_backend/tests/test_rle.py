import random

import numpy as np
import pytest

from model_backend.rle import encode


def naive_decode(size, counts):
    """Independent decoder: expand runs, refold column-major."""
    h, w = size
    flat = []
    value = False
    for run in counts:
        flat.extend([value] * run)
        value = not value
    assert len(flat) == h * w
    grid = np.zeros((h, w), dtype=bool)
    for i, v in enumerate(flat):
        x, y = divmod(i, h)
        grid[y][x] = v
    return grid


class TestKnownMasks:
    def test_empty(self):
        assert encode(np.zeros((5, 7), dtype=bool)) == {"size": [5, 7], "counts": [35]}

    def test_full(self):
        assert encode(np.ones((5, 7), dtype=bool)) == {"size": [5, 7], "counts": [0, 35]}

    def test_column_major_single_pixel(self):
        mask = np.zeros((3, 2), dtype=bool)
        mask[2, 0] = True  # column-major index 2
        assert encode(mask) == {"size": [3, 2], "counts": [2, 1, 3]}

    def test_leading_zero_when_origin_set(self):
        mask = np.zeros((3, 2), dtype=bool)
        mask[0, 0] = True
        assert encode(mask) == {"size": [3, 2], "counts": [0, 1, 5]}

    def test_non_2d_rejected(self):
        with pytest.raises(ValueError):
            encode(np.zeros((2, 2, 2), dtype=bool))


class TestProperties:
    def test_round_trip_and_invariants(self):
        rng = random.Random(99)
        for _ in range(200):
            h, w = rng.randint(1, 20), rng.randint(1, 20)
            mask = np.array(
                [[rng.random() < 0.4 for _ in range(w)] for _ in range(h)], dtype=bool
            )
            wire = encode(mask)
            assert wire["size"] == [h, w]
            counts = wire["counts"]
            assert sum(counts) == h * w
            assert all(c >= 1 for c in counts[1:])  # only the leader may be 0
            assert (counts[0] == 0) == bool(mask[0, 0])
            assert (naive_decode(wire["size"], counts) == mask).all()
