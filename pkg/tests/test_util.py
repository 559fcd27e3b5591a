import itertools

import numpy as np
import pytest

from pyhaar_cascade.types.rect import Rect
from pyhaar_cascade.util.geometry_util import (
    UnionFind,
    intersection_area,
    iou,
    iou_against,
    round_half_up,
    scaled_step,
    scan_scales,
    window_grid,
)


def test_round_half_up():
    assert round_half_up(2.5) == 3
    assert round_half_up(3.5) == 4
    assert round_half_up(2.4999) == 2
    assert round_half_up(37.5) == 38
    assert round_half_up(-0.5) == 0


def test_iou_of_identical_disjoint_and_half_overlap():
    a = Rect(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, Rect(10, 0, 10, 10)) == 0.0
    assert intersection_area(a, Rect(5, 0, 10, 10)) == 50
    assert iou(a, Rect(5, 0, 10, 10)) == pytest.approx(50 / 150)


def test_union_find_groups_by_smallest_member():
    sets = UnionFind(6)
    sets.union(4, 1)
    sets.union(5, 3)
    sets.union(3, 4)
    assert sets.groups() == [[0], [1, 3, 4, 5], [2]]


def test_scan_scales_stop_when_window_no_longer_fits():
    scales = scan_scales(64, 48, 24, 1.25)
    assert scales == pytest.approx([1.0, 1.25, 1.5625, 1.953125])
    assert scan_scales(64, 48, 24, 1.25, max_scale=1.3) == pytest.approx([1.0, 1.25])
    assert scan_scales(23, 100, 24, 1.25) == []


def test_window_grid_is_row_major():
    xs, ys = window_grid(6, 5, 3, 2)
    assert list(zip(xs.tolist(), ys.tolist())) == [(0, 0), (2, 0), (0, 2), (2, 2)]
    assert scaled_step(2, 1.25) == 3
    assert scaled_step(1, 0.2) == 1


def test_window_grid_covers_every_fitting_origin():
    xs, ys = window_grid(10, 7, 4, 1)
    expected = list(itertools.product(range(4), range(7)))
    assert sorted(zip(ys.tolist(), xs.tolist())) == expected
    assert np.all(xs + 4 <= 10) and np.all(ys + 4 <= 7)


def test_iou_against_matches_pairwise_iou():
    rng = np.random.default_rng(2)
    values = rng.integers([0, 0, 1, 1], [40, 40, 25, 25], size=(60, 4))
    rects = [Rect.from_list([int(v) for v in row]) for row in values]
    for i, rect in enumerate(rects):
        row = iou_against(values[i], values)
        assert row.tolist() == [iou(rect, other) for other in rects]
    assert iou_against(values[0], values[:0]).shape == (0,)
