from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmt.errors import HypothesisViolated, InvalidInput
from gmt.porosity import (DyadicCube, complement_cubes, find_dense_cap, n0_bound,
                          packing_ledger)
from gmt.visibility import build_grid
import oracles


def _set(cubes):
    return {(q.level, q.anchor) for q in cubes}


def test_left_half_gives_right_half():
    cells = np.zeros(8, bool)
    cells[:4] = True
    assert _set(complement_cubes(cells)) == {(-1, (1,))}


def test_full_set_has_no_complement():
    assert complement_cubes(np.ones(16, bool)) == []


def test_single_cell_chain_matches_enumeration():
    cells = np.zeros(8, bool)
    cells[5] = True
    got = _set(complement_cubes(cells))
    assert got == oracles.maximal_empty_cubes(cells)
    assert len(got) == 3


def test_empty_set_rejected():
    with pytest.raises(InvalidInput):
        complement_cubes(np.zeros(8, bool))


@settings(max_examples=30)
@given(st.integers(1, 2), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_complement_cubes_match_oracle(d, m, seed):
    rng = np.random.default_rng(seed)
    cells = rng.random((1 << m,) * d) < rng.uniform(0.02, 0.5)
    if not cells.any():
        cells.flat[0] = True
    assert _set(complement_cubes(cells)) == oracles.maximal_empty_cubes(cells)


def test_ledger_two_halves():
    delta = Fraction(1, 10)
    led = packing_ledger([DyadicCube(-1, (0,)), DyadicCube(-1, (1,))], delta, 1)
    assert led.lam(DyadicCube(0, (0,))) == Fraction(1, 2)
    assert led.lam(DyadicCube(-1, (0,))) == 1
    assert led.total == 3 * delta
    assert led.bound == 4 * delta


def test_ledger_empty_and_whole():
    assert packing_ledger([], 0.5, 1).total == 0
    led = packing_ledger([DyadicCube(0, (0,))], Fraction(1, 2), 1)
    assert led.lam(DyadicCube(0, (0,))) == 1
    assert led.total == led.measure_q0


def test_ledger_rejects_overlap():
    with pytest.raises(InvalidInput):
        packing_ledger([DyadicCube(-1, (0,)), DyadicCube(-2, (1,))], 0.5, 1)


def _random_family(rng, d, depth):
    """Disjoint dyadic family from a random refinement tree."""
    out = []

    def split(level, anchor):
        if level == depth or rng.random() < 0.3:
            if rng.random() < 0.6:
                out.append(DyadicCube(-level, anchor))
            return
        for off in np.ndindex(*(2,) * d):
            split(level + 1, tuple(2 * a + o for a, o in zip(anchor, off)))

    split(0, (0,) * d)
    return out


@settings(max_examples=40)
@given(st.integers(1, 2), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_packing_matches_oracle_and_bound(d, depth, seed):
    fam = _random_family(np.random.default_rng(seed), d, depth)
    if not fam:
        return
    led = packing_ledger(fam, Fraction(1, 2), d)
    assert led.total == oracles.carleson_total([(q.level, q.anchor) for q in fam], d)
    assert led.total <= led.bound


def test_n0_example():
    assert n0_bound(1, 0.1, 0.5, 1 / 16) == pytest.approx(25600)


def test_every_node_gives_q0():
    g = build_grid([0.0, -1.0], 0.1, 256)
    res = find_dense_cap(np.ones(len(g), bool), g, 0.5, 1 / 16)
    assert res.cube == DyadicCube(0, (0,))
    assert res.certificate["max_distance"] == 0.0
    assert 0 < res.r < g.delta


def test_missing_right_half_descends_left():
    g = build_grid([0.0, -1.0], 0.1, 256)
    mask = np.zeros(256, bool)
    mask[:128] = True
    res = find_dense_cap(mask, g, 0.1, 1 / 16, check_resolution=False)
    assert res.cube.depth >= 1 and res.cube.anchor[0] < (1 << res.cube.depth) // 2
    assert mask[res.theta_index]
    worst = oracles.worst_gap(g.nodes, mask, res.theta, res.r)
    assert worst == pytest.approx(res.certificate["max_distance"], abs=1e-12)
    assert worst <= res.eta * res.r
    assert res.level <= 8


def test_below_threshold_is_hypothesis_violation():
    g = build_grid([0.0, -1.0], 0.1, 64)
    mask = np.zeros(64, bool)
    mask[0] = True
    with pytest.raises(HypothesisViolated):
        find_dense_cap(mask, g, 0.5, 0.5)


@settings(max_examples=20)
@given(st.integers(0, 2 ** 32 - 1))
def test_certificate_sound_and_deterministic(seed):
    rng = np.random.default_rng(seed)
    g = build_grid([0.0, -1.0], 0.1, 64)
    mask = rng.random(64) < rng.uniform(0.2, 0.9)
    kappa = float(g.weights[mask].sum() / g.cap_measure) if mask.any() else 0.0
    if kappa <= 0:
        return
    res = find_dense_cap(mask, g, 0.5, kappa, check_resolution=False)
    again = find_dense_cap(mask, g, 0.5, kappa, check_resolution=False)
    assert res.theta_index == again.theta_index and res.r == again.r
    assert mask[res.theta_index]
    assert oracles.worst_gap(g.nodes, mask, res.theta, res.r) <= res.eta * res.r + 1e-15
    assert res.r < g.delta
    for row in res.counts:
        assert row["meeting"] >= row["M_n"] - 1e-9
