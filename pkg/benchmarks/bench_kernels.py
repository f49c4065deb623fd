"""Compare the compiled and pure-Python kernels on Koch snowflake edges.

    python3 benchmarks/bench_kernels.py --depth 6 --rays 20000 --repeat 3
"""

import argparse
import time

import numpy as np

from gmt.kernels import SegmentSoup, backends
from gmt.scene import make_scene


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, default=6)
    ap.add_argument("--rays", type=int, default=20000)
    ap.add_argument("--points", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    scene = make_scene("koch_snowflake", depth=args.depth)
    poly = scene.primitives[0]
    soup = SegmentSoup(poly._ea, poly._eb, scene.eps)
    rng = np.random.default_rng(args.seed)
    p = rng.uniform(-1.2, 1.2, (args.rays, 2))
    q = p + rng.normal(size=(args.rays, 2)) * 0.3
    x = rng.uniform(-1.2, 1.2, (args.points, 2))

    impls = backends()
    print(f"koch depth {args.depth}: {len(soup)} edges; backends: {', '.join(impls)}")
    ref = {}
    for name, mod in impls.items():
        t_hit, hits = _time(lambda: soup.first_hits(p, q, impl=mod), args.repeat)
        t_near, near = _time(lambda: soup.nearest(x, impl=mod), args.repeat)
        print(f"{name:>9}: first_hits {args.rays / t_hit:12.0f} rays/s   "
              f"nearest_edges {args.points / t_near:12.0f} points/s")
        if not ref:
            ref = {"hits": hits, "near": near[0]}
        else:
            same = np.array_equal(np.isfinite(ref["hits"]), np.isfinite(hits))
            fin = np.isfinite(hits)
            err = float(np.max(np.abs(hits[fin] - ref["hits"][fin]), initial=0.0))
            derr = float(np.max(np.abs(near[0] - ref["near"])))
            print(f"{'':>9}  agree: hit pattern {same}, max |dt| {err:.2e}, max |d dist| {derr:.2e}")


if __name__ == "__main__":
    main()
