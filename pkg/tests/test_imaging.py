import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from glyphstemma.imaging import (
    BoundingBox,
    OrderedBox,
    SegmentationParams,
    binarize,
    crop_glyphs,
    extract_components,
    filter_boxes,
    morphological_open,
    otsu_threshold,
    segment_page,
    sort_reading_order,
    to_grayscale,
)
from glyphstemma.synth import ALPHABET, render_page

from oracles import otsu_scan


def test_grayscale_identity_and_weights():
    gray = np.arange(12, dtype=np.uint8).reshape(3, 4)
    assert to_grayscale(gray) is gray
    rgb = np.array([[[255, 255, 255], [255, 0, 0]]], dtype=np.uint8)
    out = to_grayscale(rgb)
    assert out.tolist() == [[255, round(0.299 * 255)]]
    assert out[0, 1] == 76


def test_grayscale_rejects_two_channels():
    with pytest.raises(ValueError):
        to_grayscale(np.zeros((2, 2, 2), dtype=np.uint8))


def test_otsu_examples():
    bimodal = np.array([0] * 10 + [255] * 10, dtype=np.uint8).reshape(4, 5)
    assert otsu_threshold(bimodal) == 0
    uniform = np.full((5, 5), 128, dtype=np.uint8)
    assert otsu_threshold(uniform) == 128
    assert not binarize(uniform, 128).any()
    small = np.array([[0, 0, 0, 255]], dtype=np.uint8)
    assert otsu_threshold(small) == otsu_scan([0, 0, 0, 255]) == 0


@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.integers(2, 40)))
def test_otsu_matches_exhaustive_scan(px):
    if len(set(px.tolist())) == 1:
        assert otsu_threshold(px) == px[0]
    else:
        assert otsu_threshold(px) == otsu_scan(px.tolist())


def _square_page(dark=True):
    page = np.full((20, 20), 255 if dark else 0, dtype=np.uint8)
    page[5:11, 7:13] = 0 if dark else 255
    expected = np.zeros((20, 20), dtype=bool)
    expected[5:11, 7:13] = True
    return page, expected


def test_binarize_polarity():
    white = np.full((4, 4), 255, dtype=np.uint8)
    assert not binarize(white, 0).any()
    page, expected = _square_page(dark=True)
    assert np.array_equal(binarize(page, otsu_threshold(page)), expected)
    inv, expected = _square_page(dark=False)
    assert np.array_equal(binarize(inv, otsu_threshold(inv), ink_is_dark=False), expected)


def test_opening_examples():
    speck = np.zeros((9, 9), dtype=bool)
    speck[4, 4] = True
    assert not morphological_open(speck, 3).any()
    block = np.zeros((16, 16), dtype=bool)
    block[3:13, 3:13] = True
    assert np.array_equal(morphological_open(block, 3), block)
    assert not morphological_open(np.zeros((5, 5), dtype=bool), 3).any()
    with pytest.raises(ValueError):
        morphological_open(block, 4)


@settings(max_examples=50, deadline=None)
@given(arrays(bool, st.tuples(st.integers(3, 24), st.integers(3, 24))), st.sampled_from([1, 3, 5]))
def test_opening_is_idempotent_and_antiextensive(mask, k):
    opened = morphological_open(mask, k)
    assert not (opened & ~mask).any()
    assert np.array_equal(morphological_open(opened, k), opened)


def test_components():
    img = np.zeros((12, 12), dtype=bool)
    img[1:4, 1:4] = True
    assert extract_components(img) == [BoundingBox(1, 1, 3, 3)]
    img[7:10, 6:11] = True
    assert len(extract_components(img)) == 2
    diag = np.zeros((4, 4), dtype=bool)
    diag[1, 1] = diag[2, 2] = True
    assert extract_components(diag) == [BoundingBox(1, 1, 2, 2)]


def test_ring_is_one_component():
    ring = np.zeros((9, 9), dtype=bool)
    ring[1:8, 1:8] = True
    ring[3:6, 3:6] = False
    assert extract_components(ring) == [BoundingBox(1, 1, 7, 7)]


def test_filter_boxes():
    boxes = [BoundingBox(0, 0, 4, 5), BoundingBox(10, 10, 6, 6)]
    assert filter_boxes(boxes, 15, 100, 3) == boxes
    assert filter_boxes([BoundingBox(0, 0, 1, 1)], 0, 100, 2) == []
    assert filter_boxes([BoundingBox(0, 0, 100, 100)] + boxes, 15, 500, 3) == boxes
    with pytest.raises(ValueError):
        filter_boxes(boxes, 10, 5, 1)


def _boxes_with_centers(xs, cys, h=4):
    return [BoundingBox(x, int(cy - h / 2), 3, h) for x, cy in zip(xs, cys)]


def test_reading_order_examples():
    upper, lower = BoundingBox(50, 0, 5, 5), BoundingBox(0, 40, 5, 5)
    assert [o.box for o in sort_reading_order([lower, upper])] == [upper, lower]
    single = BoundingBox(3, 3, 4, 4)
    assert sort_reading_order([single]) == [OrderedBox(single, 0)]
    b = _boxes_with_centers([30, 10, 5], [10, 12, 40])
    assert [bb.center_y for bb in b] == [10, 12, 40]
    ordered = sort_reading_order(b, bin_height=20)
    assert [o.line for o in ordered] == [0, 0, 1]
    assert [o.box.x for o in ordered] == [10, 30, 5]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 200), st.integers(0, 200), st.integers(1, 20), st.integers(1, 20)), max_size=25))
def test_reading_order_idempotent(raw):
    boxes = [BoundingBox(*r) for r in raw]
    once = sort_reading_order(boxes, bin_height=10)
    twice = sort_reading_order([o.box for o in once], bin_height=10)
    assert once == twice
    keys = [(o.line, o.box.x) for o in once]
    assert keys == sorted(keys)


def test_crop_glyphs_padding_and_border():
    mask = np.zeros((10, 10), dtype=bool)
    mask[2:5, 2:5] = True
    (crop,) = crop_glyphs(mask, [BoundingBox(2, 2, 3, 3)], 2, "ms")
    assert crop.patch.shape == (7, 7)
    assert crop.patch[2:5, 2:5].all() and crop.patch.sum() == 9
    (tight,) = crop_glyphs(mask, [BoundingBox(2, 2, 3, 3)], 0, "ms")
    assert np.array_equal(tight.patch, mask[2:5, 2:5])
    corner = np.zeros((10, 10), dtype=bool)
    corner[0:3, 0:3] = True
    (c,) = crop_glyphs(corner, [BoundingBox(0, 0, 3, 3)], 2, "ms")
    assert c.patch.shape == (7, 7)
    assert c.patch[2:5, 2:5].all() and c.patch.sum() == 9
    assert c.glyph_id == "ms_00000"


def test_synthetic_page_glyph_count_and_determinism():
    text = (ALPHABET * 3)[:57]
    page = render_page(text, chars_per_line=13)
    ordered, mask = segment_page(page, SegmentationParams())
    assert len(ordered) == len(text)
    again, mask2 = segment_page(page.copy(), SegmentationParams())
    assert ordered == again and np.array_equal(mask, mask2)
    lines = [o.line for o in ordered]
    assert lines == sorted(lines) and lines[-1] == (len(text) - 1) // 13
