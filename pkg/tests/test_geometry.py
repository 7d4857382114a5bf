import numpy as np
import pytest

from pobf.dataset import BBox
from pobf.errors import DegenerateMaskError, GeometryError, ProtocolError
from pobf.geometry import (
    RasterMask,
    box_pixel_rect,
    denormalize_box,
    iou,
    normalize_box,
    outside_mask,
    zero_inside,
)

from conftest import make_image, random_inbounds_box
from oracles import pixel_count_iou


class TestIoU:
    def test_identity(self):
        x = BBox(5, 5, 10, 10)
        assert iou(x, x) == 1.0

    def test_disjoint(self):
        assert iou(BBox(5, 5, 10, 10), BBox(50, 50, 10, 10)) == 0.0

    def test_edge_touching_is_zero(self):
        assert iou(BBox(5, 5, 10, 10), BBox(15, 5, 10, 10)) == 0.0

    def test_worked_quarter_overlap(self):
        # corners (0,0)-(10,10) vs (5,5)-(15,15): inter 25, union 175
        got = iou(BBox(5, 5, 10, 10), BBox(10, 10, 10, 10))
        assert got == pytest.approx(25 / 175, abs=1e-9)
        assert got == pytest.approx(
            pixel_count_iou((5, 5, 10, 10), (10, 10, 10, 10), 20, 20), abs=1e-9
        )

    def test_symmetry_range_translation(self):
        rng = np.random.default_rng(11)
        for _ in range(2000):
            a = BBox(*(float(v) for v in [rng.uniform(0, 80), rng.uniform(0, 80),
                                          rng.uniform(0.1, 40), rng.uniform(0.1, 40)]))
            b = BBox(*(float(v) for v in [rng.uniform(0, 80), rng.uniform(0, 80),
                                          rng.uniform(0.1, 40), rng.uniform(0.1, 40)]))
            v = iou(a, b)
            assert v == iou(b, a)
            assert 0.0 <= v <= 1.0
            dx, dy = float(rng.uniform(-30, 30)), float(rng.uniform(-30, 30))
            a2 = BBox(a.cx + dx, a.cy + dy, a.w, a.h)
            b2 = BBox(b.cx + dx, b.cy + dy, b.w, b.h)
            assert iou(a2, b2) == pytest.approx(v, abs=1e-12)

    def test_against_pixel_counting_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            ax, ay = int(rng.integers(0, 40)), int(rng.integers(0, 40))
            aw, ah = int(rng.integers(1, 24)), int(rng.integers(1, 24))
            bx, by = int(rng.integers(0, 40)), int(rng.integers(0, 40))
            bw, bh = int(rng.integers(1, 24)), int(rng.integers(1, 24))
            a = BBox(ax + aw / 2.0, ay + ah / 2.0, float(aw), float(ah))
            b = BBox(bx + bw / 2.0, by + bh / 2.0, float(bw), float(bh))
            tol = 2.0 / min(a.area, b.area)
            assert iou(a, b) == pytest.approx(
                pixel_count_iou(a.as_list(), b.as_list(), 80, 80), abs=tol
            )


class TestOutsideMask:
    def test_ones_count_centered_box(self):
        m = outside_mask((100, 100), BBox(50, 50, 20, 20))
        assert m.ones == 100 * 100 - 400

    def test_whole_image_box_degenerate(self):
        with pytest.raises(DegenerateMaskError):
            outside_mask((10, 10), BBox(5, 5, 10, 10))

    def test_two_by_two_left_column(self):
        m = outside_mask((2, 2), BBox(0.5, 1.0, 1.0, 2.0))
        assert m.bits.flatten().tolist() == [0, 1, 0, 1]

    def test_complement_identity_random(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            width, height = int(rng.integers(2, 64)), int(rng.integers(2, 64))
            box = random_inbounds_box(rng, width, height, min_extent=0.5)
            ix0, iy0, ix1, iy1 = box_pixel_rect(box, (width, height))
            inside = (ix1 - ix0) * (iy1 - iy0)
            if inside == width * height:
                with pytest.raises(DegenerateMaskError):
                    outside_mask((width, height), box)
                continue
            m = outside_mask((width, height), box)
            assert m.ones + inside == width * height

    def test_png_round_trip(self):
        m = outside_mask((17, 9), BBox(8, 4, 6, 5))
        again = RasterMask.from_png_bytes(m.to_png_bytes())
        assert np.array_equal(again.bits, m.bits)
        assert (again.width, again.height) == (17, 9)


class TestZeroInside:
    def test_full_cover_all_black(self):
        img = np.full((10, 10, 3), 255, dtype=np.uint8)
        out = zero_inside(img, BBox(5, 5, 10, 10))
        assert (out == 0).all()

    def test_four_center_pixels(self):
        img = np.full((4, 4, 3), 255, dtype=np.uint8)
        out = zero_inside(img, BBox(2, 2, 2, 2))
        black = np.argwhere((out == 0).all(axis=2))
        assert sorted(map(tuple, black.tolist())) == [(1, 1), (1, 2), (2, 1), (2, 2)]

    def test_no_cover_identity(self):
        img = make_image(8, 8, 1)
        # sub-pixel sliver between pixel centers covers no center
        out = zero_inside(img, BBox(0.25, 0.25, 0.4, 0.4))
        assert np.array_equal(out, img)

    def test_idempotent_and_outside_preserved(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            width, height = int(rng.integers(2, 48)), int(rng.integers(2, 48))
            img = make_image(width, height, int(rng.integers(0, 1 << 31)))
            box = random_inbounds_box(rng, width, height, min_extent=0.5)
            once = zero_inside(img, box)
            assert np.array_equal(zero_inside(once, box), once)
            bits = np.ones((height, width), dtype=bool)
            ix0, iy0, ix1, iy1 = box_pixel_rect(box, (width, height))
            bits[iy0:iy1, ix0:ix1] = False
            assert np.array_equal(once[bits], img[bits])

    def test_dimension_mismatch(self):
        img = make_image(8, 8, 1)
        with pytest.raises(GeometryError, match="expected .*16, 16.* actual .*8, 8"):
            zero_inside(img, BBox(4, 4, 2, 2), expected_size=(16, 16))

    def test_source_not_mutated(self):
        img = make_image(8, 8, 2)
        before = img.copy()
        zero_inside(img, BBox(4, 4, 4, 4))
        assert np.array_equal(img, before)


class TestDenormalize:
    def test_full_frame(self):
        assert denormalize_box((0.5, 0.5, 1.0, 1.0), (100, 100)) == BBox(50, 50, 100, 100)

    def test_scaling(self):
        assert denormalize_box((0.25, 0.5, 0.1, 0.2), (200, 100)) == BBox(50, 50, 20, 20)

    def test_zero_width_widened(self):
        out = denormalize_box((0.5, 0.5, 0.0, 0.1), (100, 100))
        assert out.w == 1.0
        assert out.h == pytest.approx(10.0)

    def test_out_of_range_is_protocol_error(self):
        with pytest.raises(ProtocolError):
            denormalize_box((0.5, 0.5, 1.2, 0.1), (100, 100))
        with pytest.raises(ProtocolError):
            denormalize_box((-0.1, 0.5, 0.5, 0.1), (100, 100))

    def test_round_trip_with_normalize(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            width, height = int(rng.integers(4, 300)), int(rng.integers(4, 300))
            box = random_inbounds_box(rng, width, height)
            back = denormalize_box(normalize_box(box, (width, height)), (width, height))
            assert back.cx == pytest.approx(box.cx, abs=1e-9)
            assert back.w == pytest.approx(box.w, abs=1e-9)

    def test_result_always_clamped(self):
        rng = np.random.default_rng(33)
        for _ in range(500):
            nb = tuple(float(v) for v in rng.uniform(0, 1, 4))
            width, height = int(rng.integers(2, 100)), int(rng.integers(2, 100))
            out = denormalize_box(nb, (width, height))
            x0, y0, x1, y1 = out.corners
            assert x0 >= -1e-9 and y0 >= -1e-9
            assert x1 <= width + 1e-9 and y1 <= height + 1e-9
            assert out.w > 0 and out.h > 0
