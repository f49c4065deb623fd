import numpy as np
import pytest

from gmt.kernels import SegmentSoup, backends
from gmt.scene import make_scene

IMPLS = backends()


@pytest.fixture(scope="module")
def koch_soup():
    poly = make_scene("koch_snowflake", depth=4).primitives[0]
    return SegmentSoup(poly._ea, poly._eb, 1e-9)


def test_python_fallback_always_present():
    assert "python" in IMPLS


@pytest.mark.skipif("compiled" not in IMPLS, reason="extension not built")
def test_first_hits_agree(koch_soup):
    rng = np.random.default_rng(0)
    p = rng.uniform(-1.2, 1.2, (3000, 2))
    q = p + rng.normal(size=p.shape) * 0.4
    a = koch_soup.first_hits(p, q, impl=IMPLS["python"])
    b = koch_soup.first_hits(p, q, impl=IMPLS["compiled"])
    assert np.array_equal(np.isfinite(a), np.isfinite(b))
    fin = np.isfinite(a)
    assert np.max(np.abs(a[fin] - b[fin]), initial=0.0) <= 1e-12


@pytest.mark.skipif("compiled" not in IMPLS, reason="extension not built")
def test_nearest_agree(koch_soup):
    x = np.random.default_rng(1).uniform(-1.5, 1.5, (2000, 2))
    da, ia, *_ = koch_soup.nearest(x, impl=IMPLS["python"])
    db, ib, *_ = koch_soup.nearest(x, impl=IMPLS["compiled"])
    assert np.allclose(da, db, atol=1e-14, rtol=0)


def test_first_hits_tmin(koch_soup):
    mod = IMPLS["python"]
    p = np.array([[0.0, 0.0]])
    q = np.array([[2.0, 0.0]])
    t0 = koch_soup.first_hits(p, q, impl=mod)[0]
    t1 = koch_soup.first_hits(p, q, tmin=t0 + 1e-6, impl=mod)[0]
    assert 0 < t0 < 1
    assert not t1 <= t0
