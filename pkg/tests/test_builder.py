import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmt.builder import (ConstantLedger, boundary_net, build_domain, graph_profile, normalize,
                         overlap, partition, rho_reduce, run_proposition, sphere_net)
from gmt.cones import cone_contains
from gmt.errors import HypothesisViolated, InvalidInput
from gmt.geometry import ball_volume, geodesic
from gmt.scene import Ball, BoundarySample, make_scene
import oracles
from runs import proposition

DOWN = np.array([0.0, -1.0])


def test_ledger_couplings_recomputed():
    led = ConstantLedger.derive(3, 2.0, 1.0, 1.0, 1, c0=0.8)
    assert led.kappa == pytest.approx(2 / (4 * 3 * 2.0))
    assert led.t == pytest.approx(1 / 6)
    half = led.upsilon * 0.8 * led.delta / 2
    assert led.tau == pytest.approx(led.t / 4 * math.sin(half))
    assert led.L == pytest.approx(1 / math.cos(half))
    assert 0 < 4 * 3 * led.eta < led.upsilon < 0.25
    assert led.violations() == []


def test_ledger_rejects_bad_coupling():
    led = ConstantLedger.derive(3, 2.0, 1.0, 1.0, 1, eta=0.05)
    with pytest.raises(InvalidInput):
        led.validate()


def test_normalize_halfplane():
    s = make_scene("halfplane")
    scn, norm = normalize(s, Ball([0.0, 0.0], 1.0), 3)
    assert 2 / 3 <= norm.a <= 4 / 3
    assert norm.rho == pytest.approx(1.0)
    assert np.allclose(norm.forward(norm.backward(np.array([[0.3, -0.2]]))), [[0.3, -0.2]])
    # the exterior witness sits on +e2, clear of the normalized boundary
    assert float(scn.distance(norm.exterior.center[None])[0]) >= norm.exterior.radius * (1 - 1e-9)


def test_normalize_cantor_violates():
    with pytest.raises(HypothesisViolated):
        normalize(make_scene("four_corner_cantor", depth=4), Ball([0.5, 0.5], 0.25), 10, "outside")


def test_sphere_net_examples():
    assert len(sphere_net(DOWN, 0.1, 0.1)) == 3
    assert len(sphere_net(DOWN, 0.1, 0.25)) == 1


@pytest.mark.parametrize("theta0", [DOWN, np.array([0.0, 0.0, -1.0])])
def test_sphere_net_covers_cap(theta0):
    sep, rad = 0.03, 0.1
    xs = sphere_net(theta0, rad, sep)
    rng = np.random.default_rng(0)
    D = len(theta0)
    v = rng.normal(size=(1000, D))
    v -= (v @ theta0)[:, None] * theta0
    v /= np.linalg.norm(v, axis=1)[:, None]
    ang = rad * np.sqrt(rng.random(1000)) if D == 3 else rad * rng.uniform(-1, 1, 1000)
    dirs = np.cos(np.abs(ang))[:, None] * theta0 + np.sin(ang)[:, None] * v
    near = np.min(geodesic(dirs[:, None, :], xs[None, :, :]), axis=1)
    assert np.all(near <= sep * (1 + 1e-9))


def test_boundary_net_segment():
    pts = np.column_stack([np.linspace(0, 1, 101), np.zeros(101)])
    ys, _ = boundary_net(pts, 0.25)
    assert len(ys) == 5
    pts100 = np.column_stack([np.linspace(0, 1, 100), np.zeros(100)])
    ys100, _ = boundary_net(pts100, 0.25)
    assert len(ys100) == oracles.greedy_net_size(pts100[:, 0], 0.25)
    one, _ = boundary_net(np.array([[0.3, 0.1]]), 0.25)
    assert np.allclose(one, [[0.3, 0.1]])


@settings(max_examples=20)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 0.5))
def test_boundary_net_separated_and_covering(seed, tau):
    pts = np.random.default_rng(seed).uniform(-1, 1, (300, 2))
    ys, _ = boundary_net(pts, tau)
    gaps = np.linalg.norm(ys[:, None] - ys[None], axis=2) + np.eye(len(ys)) * 10
    assert gaps.min() >= tau * (1 - 1e-9)
    assert np.linalg.norm(pts[:, None] - ys[None], axis=2).min(axis=1).max() < tau


def test_partition_single_cell_and_pigeonhole():
    E = BoundarySample(np.zeros((10, 2)), np.ones(10), 0.0)
    xs = sphere_net(DOWN, 0.1, 0.03)
    p = partition(E, np.tile(DOWN, (10, 1)), xs, np.zeros((1, 2)))
    assert p.best_weight == 10
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, (200, 2))
    dirs = sphere_net(DOWN, 0.1, 0.05)
    ys, _ = boundary_net(pts, 0.6)
    q = partition(BoundarySample(pts, rng.random(200), 0.0),
                  dirs[rng.integers(0, len(dirs), 200)], dirs, ys)
    assert q.best_weight >= q.total / (q.n1 * q.n2)


def test_partition_empty():
    with pytest.raises(HypothesisViolated):
        partition(BoundarySample(np.zeros((0, 2)), np.zeros(0), 0.0), np.zeros((0, 2)),
                  sphere_net(DOWN, 0.1, 0.05), np.zeros((1, 2)))


def _ledger():
    return ConstantLedger.derive(3, 2.0, 1.0, 1.0, 1, c0=1.0)


def test_single_cone_domain():
    led = _ledger()
    x = np.array([0.0, 1.0])
    E = BoundarySample(np.zeros((1, 2)), np.ones(1), 0.0)
    spec = build_domain(E, x, np.zeros(2), led)
    assert not spec.contains(np.zeros((1, 2)))[0]
    assert spec.contains(np.array([[0.0, 1e-4 * led.t]]))[0]


def test_two_apex_membership_matches_per_cone():
    led = _ledger()
    x = np.array([0.0, 1.0])
    apex = np.array([[0.0, 0.0], [0.5 * led.tau, 0.0]])
    spec = build_domain(BoundarySample(apex, np.ones(2), 0.0), x, apex[0], led)
    pts = np.random.default_rng(1).uniform(-led.t / 2, led.t / 2, (10_000, 2))
    pts[:, 1] = np.abs(pts[:, 1])
    want = np.zeros(len(pts), bool)
    for c in spec.cones:
        want |= np.array([oracles.in_cone_2d(c.apex, c.axis, c.alpha, c.height, p) for p in pts])
    got = spec.in_cones(pts, closed=True)
    assert np.array_equal(got, want)


def test_graph_slope_bound():
    led = _ledger()
    apex = np.column_stack([np.linspace(-0.001, 0.001, 9), np.zeros(9)])
    spec = build_domain(BoundarySample(apex, np.ones(9), 0.0), [0.0, 1.0], apex[4], led)
    _, _, slopes = graph_profile(spec)
    assert slopes.max() <= 1 / math.tan(spec.alpha) * (1 + 1e-9)


def test_overlap_empty():
    led = _ledger()
    spec = build_domain(BoundarySample(np.zeros((0, 2)), np.zeros(0), 0.0), [0.0, 1.0],
                        np.zeros(2), led)
    assert overlap(make_scene("halfplane"), spec, 1e-3) == (0.0, 0.0)


def test_rho_reduce_unit():
    s = make_scene("halfplane", offset=-1 / 3)
    Bp, rep = rho_reduce(s, Ball([0.0, -1 / 3], 1.0), 1.0, 3)
    assert Bp.radius == 2.0 and rep["inside_3B"]
    assert rep["radius_ratio"] == pytest.approx(rep["expected_ratio"])


def test_rho_reduce_wrong_distance():
    with pytest.raises(HypothesisViolated):
        rho_reduce(make_scene("halfplane", offset=-0.5), Ball([0.0, -0.5], 1.0), 1.0, 3)


def test_overrides_validated():
    with pytest.raises(InvalidInput):
        run_proposition(make_scene("halfplane"), Ball([0.0, 0.0], 1.0), 3, overrides={"tau": 1})


@pytest.mark.slow
def test_halfplane_pipeline_regression():
    rep, _ = proposition("halfplane")
    led = rep["ledger"]
    vis = rep["stages"]["visibility"]
    assert vis["E_kappa_weight"] >= ball_volume(1) * (1 / 6) / 2
    assert rep["stages"]["partition"]["pigeonhole_holds"]
    assert rep["checks"]["members_in_omega"]
    assert rep["result"]["psi"] > 0
    assert led["L"] == 1 / math.cos(led["upsilon"] * led["c0"] * led["delta"] / 2)
    spec = rep["_spec"]
    # star shape along the axis from every apex
    s = np.linspace(1e-3, 1, 20)
    for p in spec.apexes[:: max(1, len(spec.apexes) // 16)]:
        seg = p + (s * spec.height / 2)[:, None] * spec.axis
        assert spec.in_cones(seg, closed=True).all()
    # apex recount of E_ij against the reported weight
    assert spec.E.total == pytest.approx(rep["domain"]["E_weight"])
    assert all(cone_contains(c, c.apex) for c in spec.cones[:5])
