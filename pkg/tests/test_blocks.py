import numpy as np
import pytest

from textlines.blocks import extract_blocks
from textlines.imaging import ProbabilityMap


def test_uniform_below_threshold_yields_nothing():
    sal = ProbabilityMap(np.full((12, 12), 0.19))
    assert extract_blocks(sal, threshold=0.2) == []


def test_full_frame_block_and_boundary():
    sal = ProbabilityMap(np.ones((10, 10)))
    (block,) = extract_blocks(sal)
    assert block.pixels.area == 100
    assert len(block.boundary) == 36
    assert block.bbox == (0, 0, 9, 9)
    assert block.id == 0


def test_two_plateaus_split_by_zero_column():
    data = np.zeros((7, 11))
    data[1:6, 0:5] = 0.9
    data[1:6, 6:11] = 0.9
    blocks = extract_blocks(ProbabilityMap(data))
    assert len(blocks) == 2
    assert blocks[0].pixels.area == 25 and blocks[1].pixels.area == 25
    assert blocks[0].bbox == (0, 1, 4, 5)
    assert blocks[1].bbox == (6, 1, 10, 5)


def test_min_area_filters_speckle():
    data = np.zeros((20, 20))
    data[2:6, 2:8] = 0.5  # 24 pixels
    data[10, 10] = 0.9  # lone pixel
    blocks = extract_blocks(ProbabilityMap(data), min_area=20)
    assert len(blocks) == 1
    assert blocks[0].pixels.area == 24


def test_threshold_is_strict():
    at = np.zeros((8, 8))
    at[2:7, 2:7] = 0.2
    assert extract_blocks(ProbabilityMap(at), threshold=0.2, min_area=1) == []
    above = np.zeros((8, 8))
    above[2:7, 2:7] = 0.2000001
    assert len(extract_blocks(ProbabilityMap(above), threshold=0.2, min_area=1)) == 1


def test_threshold_domain():
    sal = ProbabilityMap(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        extract_blocks(sal, threshold=0.0)
    with pytest.raises(ValueError):
        extract_blocks(sal, threshold=1.0)


def test_raising_threshold_never_adds_pixels():
    rng = np.random.default_rng(33)
    sal = ProbabilityMap(rng.random((30, 30)))
    counts = []
    for t in (0.1, 0.3, 0.5, 0.7, 0.9):
        blocks = extract_blocks(sal, threshold=t, min_area=1)
        counts.append(sum(b.pixels.area for b in blocks))
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_boundary_pixels_touch_outside():
    rng = np.random.default_rng(9)
    sal = ProbabilityMap(rng.random((25, 25)))
    h, w = 25, 25
    for block in extract_blocks(sal, threshold=0.5, min_area=5):
        member = {(int(x), int(y)) for x, y in block.pixels.pixels}
        for x, y in block.boundary:
            assert (int(x), int(y)) in member
            neighbors = [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]
            touches = any(
                not (0 <= nx < w and 0 <= ny < h) or (int(nx), int(ny)) not in member
                for nx, ny in neighbors
            )
            assert touches


def test_blocks_ordered_by_first_pixel():
    data = np.zeros((20, 20))
    data[12:18, 1:7] = 0.9
    data[1:7, 12:18] = 0.9
    blocks = extract_blocks(ProbabilityMap(data))
    firsts = [b.pixels.min_row_major_index(20) for b in blocks]
    assert firsts == sorted(firsts)
    assert [b.id for b in blocks] == [0, 1]


def test_local_mask_matches_pixels():
    data = np.zeros((15, 15))
    data[3:9, 4:12] = 0.8
    data[4, 5] = 0.0  # hole
    (block,) = extract_blocks(ProbabilityMap(data))
    mask = block.local_mask()
    assert mask.sum() == block.pixels.area
    assert not mask[1, 1]  # the hole, in bbox-local coordinates
