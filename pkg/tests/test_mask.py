
import numpy as np
import pytest

from segpipe.geometry import BBox, ImageDims
from segpipe.mask import BinaryMask, MaskRLE, rle_decode, rle_encode

from conftest import blob_mask, random_mask
from oracles import naive_rle_counts, naive_rle_decode


class TestBinaryMask:
    def test_constructors(self):
        dims = ImageDims(5, 3)
        assert BinaryMask.empty(dims).count == 0
        assert BinaryMask.full(dims).count == 15
        assert BinaryMask.empty(dims).dims == dims

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            BinaryMask(np.zeros(5, dtype=bool))
        with pytest.raises(ValueError):
            BinaryMask(np.zeros((2, 2, 3), dtype=bool))

    def test_data_is_frozen(self):
        mask = BinaryMask.empty(ImageDims(4, 4))
        with pytest.raises(ValueError):
            mask.data[0, 0] = True

    def test_source_array_detached(self):
        arr = np.zeros((3, 3), dtype=bool)
        mask = BinaryMask(arr)
        arr[0, 0] = True
        assert mask.count == 0

    def test_from_box_pixel_counts(self):
        dims = ImageDims(10, 10)
        mask = BinaryMask.from_box(BBox(2, 3, 5, 7), dims)
        assert mask.count == 3 * 4
        assert mask.bbox() == BBox(2, 3, 5, 7)

    def test_from_box_clamps(self):
        dims = ImageDims(10, 10)
        mask = BinaryMask.from_box(BBox(-5, -5, 20, 20).clamped(dims), dims)
        assert mask == BinaryMask.full(dims)

    def test_bbox_empty(self):
        assert BinaryMask.empty(ImageDims(4, 4)).bbox() is None

    def test_set_operators(self, rng):
        dims = ImageDims(16, 16)
        for _ in range(50):
            a = random_mask(rng, dims.height, dims.width)
            b = random_mask(rng, dims.height, dims.width)
            union, inter, sym = a | b, a & b, a ^ b
            assert union.count == a.count + b.count - inter.count
            assert sym.count == union.count - inter.count
            assert (a ^ a).is_empty

    def test_operators_reject_dim_mismatch(self):
        a = BinaryMask.empty(ImageDims(4, 4))
        b = BinaryMask.empty(ImageDims(4, 5))
        for op in (lambda: a | b, lambda: a & b, lambda: a ^ b):
            with pytest.raises(ValueError):
                op()

    def test_equality(self):
        a = blob_mask(ImageDims(6, 6), 1, 1, 4, 4)
        b = blob_mask(ImageDims(6, 6), 1, 1, 4, 4)
        c = blob_mask(ImageDims(6, 6), 1, 1, 4, 5)
        assert a == b
        assert a != c
        assert a != "not a mask"


class TestRleAgainstOracle:
    def test_known_tiny_masks(self):
        # 2x3, single foreground pixel at (x=1, y=0): column-major index 2.
        data = np.array([[0, 1, 0], [0, 0, 0]], dtype=bool)
        rle = rle_encode(BinaryMask(data))
        assert rle.size == (2, 3)
        assert rle.counts == (2, 1, 3)

    def test_leading_zero_when_first_pixel_set(self):
        data = np.array([[1, 0], [0, 0]], dtype=bool)
        rle = rle_encode(BinaryMask(data))
        assert rle.counts == (0, 1, 3)

    def test_empty_and_full(self):
        dims = ImageDims(7, 5)
        assert rle_encode(BinaryMask.empty(dims)).counts == (35,)
        assert rle_encode(BinaryMask.full(dims)).counts == (0, 35)

    def test_matches_naive_encoder(self, rng):
        for _ in range(300):
            h, w = rng.randint(1, 24), rng.randint(1, 24)
            mask = random_mask(rng, h, w, rng.random())
            rle = rle_encode(mask)
            assert rle.size == (h, w)
            assert list(rle.counts) == naive_rle_counts(mask.data.tolist())
            assert sum(rle.counts) == h * w

    def test_round_trip_random(self, rng):
        # Acceptance-level volume lives in test_acceptance; this is the fast check.
        for _ in range(300):
            h, w = rng.randint(1, 32), rng.randint(1, 32)
            mask = random_mask(rng, h, w, rng.random())
            assert rle_decode(rle_encode(mask)) == mask

    def test_decode_matches_naive_decoder(self, rng):
        for _ in range(100):
            h, w = rng.randint(1, 16), rng.randint(1, 16)
            mask = random_mask(rng, h, w, 0.4)
            rle = rle_encode(mask)
            naive = naive_rle_decode(rle.size, rle.counts)
            assert rle_decode(rle).data.tolist() == naive


class TestRleValidation:
    def test_decode_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            rle_decode(MaskRLE(size=(2, 2), counts=(3,)))
        with pytest.raises(ValueError):
            rle_decode(MaskRLE(size=(2, 2), counts=(5,)))

    def test_wire_round_trip(self, rng):
        for _ in range(50):
            mask = random_mask(rng, rng.randint(1, 12), rng.randint(1, 12))
            rle = rle_encode(mask)
            assert MaskRLE.from_wire(rle.to_wire()) == rle

    def test_wire_field_names(self):
        wire = rle_encode(BinaryMask.empty(ImageDims(3, 2))).to_wire()
        assert set(wire) == {"size", "counts"}
        assert wire["size"] == [2, 3]  # [height, width]

    @pytest.mark.parametrize(
        "bad",
        [
            None,
            [],
            {},
            {"size": [2, 2]},
            {"counts": [4]},
            {"size": [2], "counts": [4]},
            {"size": [2, 0], "counts": [0]},
            {"size": [2.0, 2.0], "counts": [4]},
            {"size": [True, 2], "counts": [2]},
            {"size": [2, 2], "counts": 4},
            {"size": [2, 2], "counts": [-1, 5]},
            {"size": [2, 2], "counts": [1.5, 2.5]},
            {"size": [2, 2], "counts": [3]},
            {"size": [2, 2], "counts": [2, 3]},
        ],
    )
    def test_from_wire_rejects_malformed(self, bad):
        with pytest.raises(ValueError):
            MaskRLE.from_wire(bad)
