import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crashsim.geometry import (
    OrientedBox,
    obb_overlap,
    obb_overlap_batch,
    point_in_polygon,
    polygon_is_simple,
    segment_intersects_polygon,
    segments_blocked_batch,
    segments_intersect,
)

from oracles import point_oracle, separation

SQUARE = ((0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0))

coord = st.floats(-10, 10, allow_nan=False)
dim = st.floats(0.3, 6, allow_nan=False)
angle = st.floats(-math.pi, math.pi, allow_nan=False)
boxes = st.builds(lambda x, y, h, l, w: OrientedBox((x, y), h, l, w), coord, coord, angle, dim, dim)


def test_box_corners_axis_aligned_and_rotated():
    box = OrientedBox((0.0, 0.0), 0.0, 4.0, 2.0)
    assert sorted(map(tuple, np.round(box.corners(), 12))) == sorted([(2, 1), (-2, 1), (-2, -1), (2, -1)])
    rot = OrientedBox((0.0, 0.0), math.pi / 2, 4.0, 2.0)
    assert sorted(map(tuple, np.round(rot.corners(), 12) + 0.0)) == sorted([(1, 2), (-1, 2), (-1, -2), (1, -2)])


def test_box_rejects_nonpositive_dims():
    with pytest.raises(ValueError):
        OrientedBox((0, 0), 0, 0.0, 1.0)


def test_identical_boxes_overlap():
    a = OrientedBox((1.0, 2.0), 0.3, 4.0, 2.0)
    assert obb_overlap(a, a)


def test_far_boxes_do_not_overlap():
    assert not obb_overlap(OrientedBox((0, 0), 0, 2, 4), OrientedBox((10, 0), 0, 2, 4))


def test_rotated_box_matches_dense_point_oracle():
    a = OrientedBox((0.0, 0.0), 0.0, 4.0, 2.0)
    b = OrientedBox((3.0, 0.0), math.pi / 4, 4.0, 2.0)
    assert obb_overlap(a, b) == point_oracle(a, b, n=10_000)


def test_touching_counts_as_overlap():
    a = OrientedBox((0.0, 0.0), 0.0, 2.0, 2.0)
    b = OrientedBox((2.0, 0.0), 0.0, 2.0, 2.0)
    assert obb_overlap(a, b)
    assert not obb_overlap(a, OrientedBox((2.0 + 1e-9, 0.0), 0.0, 2.0, 2.0))


@given(boxes, boxes)
def test_overlap_symmetric(a, b):
    assert obb_overlap(a, b) == obb_overlap(b, a)


@given(boxes, boxes)
def test_batch_matches_scalar(a, b):
    got = obb_overlap_batch(
        np.array([a.center[0]]), np.array([a.center[1]]), np.array([a.heading]), a.length, a.width,
        np.array([b.center[0]]), np.array([b.center[1]]), np.array([b.heading]), b.length, b.width,
    )
    assert bool(got[0]) == obb_overlap(a, b)


def test_overlap_agrees_with_point_oracle_on_random_pairs():
    rng = np.random.default_rng(42)
    checked = 0
    while checked < 1000:
        a = OrientedBox((rng.uniform(-3, 3), rng.uniform(-3, 3)), rng.uniform(-math.pi, math.pi), rng.uniform(0.5, 5), rng.uniform(0.5, 3))
        b = OrientedBox((rng.uniform(-3, 3), rng.uniform(-3, 3)), rng.uniform(-math.pi, math.pi), rng.uniform(0.5, 5), rng.uniform(0.5, 3))
        gap = separation(a, b)
        if abs(gap) < 1e-6:
            continue
        assert obb_overlap(a, b) == point_oracle(a, b, n=800, rng=rng), (a, b, gap)
        checked += 1


def test_segment_through_square_interior():
    assert segment_intersects_polygon((-1.0, 1.0), (3.0, 1.0), SQUARE)


def test_segment_outside_square():
    assert not segment_intersects_polygon((-5.0, -5.0), (-4.0, 6.0), SQUARE)


def test_segment_inside_square_counts():
    assert segment_intersects_polygon((0.5, 0.5), (1.5, 1.5), SQUARE)


@pytest.mark.parametrize("eps", [-1e-9, 0.0, 1e-9])
def test_vertex_graze_is_inclusive(eps):
    # the diagonal line x + y = 4 touches the square only at the vertex (2, 2)
    p1, p2 = (0.0, 4.0 + eps), (4.0, 0.0 + eps)
    got = segment_intersects_polygon(p1, p2, SQUARE)
    if eps <= 0:
        assert got
    else:
        assert not got


def test_segments_intersect_shared_endpoint_and_collinear():
    assert segments_intersect((0, 0), (1, 1), (1, 1), (2, 0))
    assert segments_intersect((0, 0), (2, 0), (1, 0), (3, 0))
    assert not segments_intersect((0, 0), (1, 0), (2, 0), (3, 0))


@given(st.lists(st.tuples(coord, coord, coord, coord), min_size=1, max_size=20))
def test_blocked_batch_matches_scalar(segs):
    arr = np.array(segs)
    got = segments_blocked_batch(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], SQUARE)
    want = [segment_intersects_polygon((a, b), (c, d), SQUARE) for a, b, c, d in segs]
    assert list(got) == want


def test_point_in_polygon_and_simplicity():
    assert point_in_polygon((1.0, 1.0), SQUARE)
    assert not point_in_polygon((3.0, 1.0), SQUARE)
    assert polygon_is_simple(SQUARE)
    assert not polygon_is_simple(((0, 0), (2, 2), (2, 0), (0, 2)))
    assert not polygon_is_simple(((0, 0), (1, 1)))
