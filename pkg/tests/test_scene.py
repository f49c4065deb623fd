import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gmt.errors import InvalidInput
from gmt.scene import Ball, Polyline, Scene, Segment, make_scene
import oracles


def test_classify_sides_of_line():
    s = make_scene("halfplane")
    assert s.classify([0.0, 0.5]) == "upper"
    assert s.classify([0.0, -0.5]) == "lower"


def test_polygon_inside_outside():
    s = make_scene("polygon")
    assert s.classify([0.0, 0.0]) == "inside"
    assert s.classify([2.0, 0.0]) == "outside"


def test_cast_hits_square_edge():
    s = make_scene("polygon")
    t = s.cast(np.array([[0.0, 0.0], [0.0, 0.0]]), np.array([[3.0, 0.0], [0.0, 0.5]]))
    assert t[0] == pytest.approx(1 / 3)
    assert math.isinf(t[1])


def test_open_start_skips_the_start_point():
    s = make_scene("halfplane")
    p, q = np.array([[0.0, 0.0]]), np.array([[0.0, 1.0]])
    assert s.cast(p, q)[0] == 0.0
    assert math.isinf(s.cast(p, q, open_start=True)[0])


def test_first_hit_examples():
    line, circle = make_scene("halfplane"), make_scene("disk")
    hit, dist = line.first_hit(Segment([0.0, 1.0], [0.0, -1.0]))
    assert np.allclose(hit, [0.0, 0.0]) and dist == pytest.approx(1.0)
    hit, dist = circle.first_hit(Segment([2.0, 0.0], [0.0, 0.0]))
    assert np.allclose(hit, [1.0, 0.0]) and dist == pytest.approx(1.0)
    assert line.first_hit(Segment([0.0, 1.0], [1.0, 1.0])) is None


def test_classify_boundary_and_circle():
    assert make_scene("halfplane").classify([0.0, 0.0], 1e-6) == "boundary"
    assert make_scene("disk").classify([0.3, 0.0], 1e-6) == "inside"


def test_boundary_measure_chord():
    s = make_scene("halfplane")
    m = s.boundary_measure(Ball([0.0, 0.0], 1.0), 1e-3)
    assert abs(m - 2.0) <= 2 * 1e-3


def test_boundary_measure_circle():
    s = make_scene("disk")
    assert s.boundary_measure(Ball([1.0, 0.0], 2.0), 1e-3) == pytest.approx(2 * math.pi, abs=1e-3)


def test_boundary_measure_plane_disk():
    s = make_scene("halfplane", dimension=3)
    assert s.boundary_measure(Ball([0.0, 0.0, 0.0], 1.0), 1e-3) == pytest.approx(math.pi, rel=1e-2)


@pytest.mark.parametrize("name,count", [("halfplane", 2), ("disk", 2), ("annulus", 3),
                                        ("polygon", 2), ("slab", 3), ("nested_squares", 3)])
def test_component_counts(name, count):
    assert len(make_scene(name).labels) == count


def test_cusp_components():
    s = make_scene("parabola_cusp")
    assert s.classify([0.0, 1.0]) == "top"
    assert s.classify([0.0, -1.0]) == "bottom"
    assert s.classify([1.0, 0.0]) == "cusp_right"
    # the slit regions on both sides of the origin touch only at the cusp point
    assert s.classify([-1.0, 0.0]) == "cusp_left"


def test_cantor_complement_connected():
    s = make_scene("four_corner_cantor", depth=4)
    assert s.labels == ("outside",)
    assert s.resolution == pytest.approx(1 / 16 / 16)


def test_depth_guard_and_unknown_name():
    with pytest.raises(InvalidInput):
        make_scene("koch_snowflake", depth=13)
    with pytest.raises(InvalidInput):
        make_scene("moebius")


def test_json_round_trip(tmp_path):
    for name in ("halfplane", "annulus", "koch_snowflake", "parabola_cusp"):
        s = make_scene(name)
        path = tmp_path / f"{name}.json"
        s.to_json(path)
        back = Scene.from_json(path)
        pts = np.random.default_rng(1).uniform(-1.5, 1.5, (50, 2))
        assert [back.classify(p) for p in pts] == [s.classify(p) for p in pts]
        assert np.allclose(back.distance(pts), s.distance(pts))


def test_distance_matches_brute_force_koch():
    s = make_scene("koch_snowflake", depth=3)
    v = s.primitives[0].vertices
    segs = list(zip(v, np.roll(v, -1, axis=0)))
    pts = np.random.default_rng(4).uniform(-1.2, 1.2, (60, 2))
    got = s.distance(pts)
    want = [oracles.point_segment_distance(x, segs) for x in pts]
    assert np.allclose(got, want, atol=1e-12)


def test_cast_matches_brute_force_polyline():
    rng = np.random.default_rng(7)
    verts = rng.uniform(-1, 1, (25, 2))
    s = Scene([Polyline(verts)], Ball([0.0, 0.0], 3.0))
    segs = list(zip(verts[:-1], verts[1:]))
    p = rng.uniform(-1.2, 1.2, (200, 2))
    q = rng.uniform(-1.2, 1.2, (200, 2))
    got = s.cast(p, q)
    want = np.array([oracles.first_hit_segments(a, b, segs) for a, b in zip(p, q)])
    assert np.array_equal(np.isfinite(got), np.isfinite(want))
    fin = np.isfinite(want)
    assert np.allclose(got[fin], want[fin], atol=1e-9)


SCENES = ["halfplane", "disk", "annulus", "polygon", "slab", "nested_squares",
          "koch_snowflake", "halfplane_with_ball"]
coord = st.floats(-1.3, 1.3, allow_nan=False)


@given(st.sampled_from(SCENES), coord, coord, coord, coord)
def test_segment_missing_sigma_stays_in_one_component(name, x0, y0, x1, y1):
    s = make_scene(name)
    p, q = np.array([[x0, y0]]), np.array([[x1, y1]])
    if math.isfinite(s.cast(p, q)[0]):
        return
    ids = s.component_ids(np.vstack([p, q]), check=False)
    assert ids[0] == ids[1]


@given(st.floats(0.05, 1.0), st.floats(0.0, 0.8))
def test_boundary_measure_monotone(r, extra):
    s = make_scene("disk")
    b = Ball([0.8, 0.3], r)
    big = Ball([0.8, 0.3], r + extra)
    res = 1e-3
    assert s.boundary_measure(b, res) <= s.boundary_measure(big, res) + 2 * res


def test_transformed_preserves_labels():
    s = make_scene("polygon")
    a = 0.4
    R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    t = np.array([0.1, -0.2])
    u = s.transformed(R, t)
    for p in ([0.0, 0.0], [2.0, 0.5], [0.9, 0.9]):
        assert u.classify(R @ np.asarray(p) + t) == s.classify(p)
