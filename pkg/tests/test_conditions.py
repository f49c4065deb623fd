import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmt.conditions import (check_corkscrew, check_two_ball, chord_clear, estimate_regularity,
                            inscribed_radius)
from gmt.errors import InvalidInput
from gmt.scene import make_scene
import oracles

CUSP_INSCRIBED_R01 = 0.008276650477408809  # oracles.cusp_inscribed(0.1), frozen


def _sound(scene, xi, r, C, balls):
    for b in balls:
        assert b.radius >= r / C * (1 - 1e-9)
        assert np.linalg.norm(b.center - xi) + b.radius <= r * (1 + 1e-9)
        assert float(scene.distance(b.center[None])[0]) >= b.radius * (1 - 1e-9)
        assert chord_clear(scene, b, chords=160)


def test_line_two_ball_witnesses():
    s = make_scene("halfplane")
    v = check_two_ball(s, [0.0, 0.0], 1.0, 3)
    assert v.holds
    centers = sorted(tuple(np.round(b.center, 9)) for b in v.witnesses)
    assert centers == [(0.0, -0.5), (0.0, 0.5)]
    assert all(b.radius == pytest.approx(1 / 3) for b in v.witnesses)
    _sound(s, np.zeros(2), 1.0, 3, v.witnesses)


def test_circle_two_ball_radial():
    s = make_scene("disk")
    v = check_two_ball(s, [1.0, 0.0], 0.5, 4)
    assert v.holds
    labels = {s.classify(b.center) for b in v.witnesses}
    assert labels == {"inside", "outside"}
    _sound(s, np.array([1.0, 0.0]), 0.5, 4, v.witnesses)


def test_cantor_two_ball_fails():
    s = make_scene("four_corner_cantor", depth=4)
    v = check_two_ball(s, [0.5, 0.5], 0.5, 10)
    assert not v.holds
    assert v.failures


def test_halfplane_interior_corkscrew():
    v = check_corkscrew(make_scene("halfplane"), "lower", [0.0, 0.0], 1.0, 3)
    assert v.holds
    assert np.allclose(v.witnesses[0].center, [0.0, -0.5])


def test_disk_exterior_corkscrew():
    s = make_scene("disk")
    v = check_corkscrew(s, "outside", [1.0, 0.0], 0.5, 4, "exterior")
    assert v.holds
    assert s.classify(v.witnesses[0].center) == "inside"


def test_cusp_interior_fails_at_c10():
    s = make_scene("parabola_cusp")
    v = check_corkscrew(s, "cusp_right", [0.0, 0.0], 0.1, 10, "interior")
    assert not v.holds
    assert v.details["clearance"] == pytest.approx(CUSP_INSCRIBED_R01, rel=1e-3)


def test_inscribed_radius_matches_oracle():
    s = make_scene("parabola_cusp")
    got, center = inscribed_radius(s, "cusp_right", np.zeros(2), 0.1, 1e-4)
    assert got == pytest.approx(CUSP_INSCRIBED_R01, rel=2e-3)
    assert center[0] == pytest.approx(0.09, abs=0.005)


def test_frozen_cusp_value_matches_oracle():
    assert oracles.cusp_inscribed(0.1, n=4001) == pytest.approx(CUSP_INSCRIBED_R01, rel=1e-3)


def test_unknown_label_rejected():
    with pytest.raises(InvalidInput):
        check_corkscrew(make_scene("halfplane"), "middle", [0.0, 0.0], 1.0, 3)


def test_off_sigma_rejected():
    with pytest.raises(InvalidInput):
        check_two_ball(make_scene("halfplane"), [0.0, 0.3], 1.0, 3)


def test_line_regularity_tight():
    s = make_scene("halfplane")
    pairs = [(np.array([x, 0.0]), r) for x, r in zip(np.linspace(-1, 1, 20), np.linspace(0.1, 0.9, 20))]
    v = estimate_regularity(s, pairs)
    assert v.constant == pytest.approx(1.0, abs=0.05)


def test_circle_regularity_small_scales():
    s = make_scene("disk")
    ang = np.linspace(0, 6, 20)
    pairs = [(np.array([math.cos(a), math.sin(a)]), r) for a, r in zip(ang, np.linspace(0.05, 0.3, 20))]
    assert estimate_regularity(s, pairs).constant <= 1.05


def test_koch_regularity_reported():
    s = make_scene("koch_snowflake", depth=6)
    v = s.primitives[0].vertices
    pairs = [(v[k], 2.0 ** -j) for k in (0, 100, 1000) for j in range(1, 6)]
    out = estimate_regularity(s, pairs)
    assert out.constant >= 1.0


def test_regularity_empty_samples():
    with pytest.raises(InvalidInput):
        estimate_regularity(make_scene("halfplane"), [])


SCENES = [("halfplane", lambda u: np.array([u, 0.0])),
          ("disk", lambda u: np.array([math.cos(3 * u), math.sin(3 * u)])),
          ("polygon", lambda u: np.array([1.0, 0.9 * u]))]


@settings(max_examples=15)
@given(st.sampled_from(range(len(SCENES))), st.floats(-1, 1), st.floats(0.1, 0.5), st.floats(0, 3))
def test_two_ball_monotone_in_C(k, u, r, extra):
    name, at = SCENES[k]
    s = make_scene(name)
    xi = at(u)
    v = check_two_ball(s, xi, r, 3)
    if v.holds:
        assert check_two_ball(s, xi, r, 3 + extra).holds


@settings(max_examples=10)
@given(st.sampled_from(range(len(SCENES))), st.floats(-1, 1), st.floats(0.1, 0.5))
def test_two_ball_implies_exterior_corkscrews(k, u, r):
    name, at = SCENES[k]
    s = make_scene(name)
    xi = at(u)
    if not check_two_ball(s, xi, r, 3).holds:
        return
    for lab in s.labels:
        assert check_corkscrew(s, lab, xi, r, 3, "exterior").holds
