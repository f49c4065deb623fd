"""Tangent-point detection: flatness, contingent directions and the two-sided pipeline.

A boundary point is flagged when it has an empty two-sided cone pair around a
visible direction and its flatness ratio stays small at the finest scales
the discretization can resolve.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .builder import UPSILON, ETA_FRACTION, DELTA_CAP
from .conditions import _require_on_sigma, check_two_ball
from .cones import two_sided_cone
from .errors import HypothesisViolated, InvalidInput, ResolutionError
from .geometry import rotation_taking, tangent_frame, unit
from .porosity import find_dense_cap
from .scene import BOUNDARY, Ball, BoundarySample, HalfSpace, Scene, Sphere, _EdgeSet, _clip_params
from .visibility import build_grid, delta1, fiber_gaps, lemma_hull

THRESHOLD = 0.05
FINEST = 4
CLASSES = ("tangent-candidate", "non-flat", "undetermined")


# --------------------------------------------------------------------------
# flatness


@dataclass
class Plane:
    """Affine d-plane through ``point`` with unit ``normal``."""

    point: np.ndarray
    normal: np.ndarray

    @property
    def basis(self):
        return tangent_frame(self.normal)

    def distance(self, points):
        return np.abs((np.atleast_2d(points) - self.point) @ self.normal)

    def to_dict(self):
        return {"point": self.point.tolist(), "normal": self.normal.tolist(),
                "basis": self.basis.tolist()}


def _circle_meets(c1, r1, c2, r2):
    """Intersection points of two circles in the plane (possibly none)."""
    v = c2 - c1
    dist = float(np.linalg.norm(v))
    if dist == 0 or dist > r1 + r2 or dist < abs(r1 - r2):
        return np.zeros((0, 2))
    a = (r1 * r1 - r2 * r2 + dist * dist) / (2 * dist)
    h = math.sqrt(max(r1 * r1 - a * a, 0.0))
    u = v / dist
    w = np.array([-u[1], u[0]])
    base = c1 + a * u
    return np.array([base + h * w, base - h * w])


def local_points(scene: Scene, xi, r):
    """Points of Sigma in the closed ball B(xi, r) that realize sup-distance bounds.

    Edges contribute their clipped endpoints (distance to a plane is convex
    along a segment, so the sup sits there); curved pieces are sampled
    densely and their rim on the sphere |x - xi| = r is added exactly.
    """
    xi = np.asarray(xi, float)
    ball = Ball(xi, r)
    D = len(xi)
    out = []
    for p in scene.primitives:
        if isinstance(p, _EdgeSet):
            cand = p._tree.query_ball_point(xi, r + p._halfmax)
            if not cand:
                continue
            e = np.unique(p._owner[np.asarray(cand, dtype=np.int64)])
            a, b = p._ea[e], p._eb[e]
            lo, hi, ok = _clip_params(a, b, ball)
            keep = ok & (hi >= lo)
            d = b[keep] - a[keep]
            out += [a[keep] + lo[keep, None] * d, a[keep] + hi[keep, None] * d]
        elif isinstance(p, HalfSpace):
            f = float(xi @ p.normal - p.offset)
            if abs(f) > r:
                continue
            foot = xi - f * p.normal
            rad = math.sqrt(max(r * r - f * f, 0.0))
            fr = tangent_frame(p.normal)
            if D == 2:
                out.append(np.array([foot - rad * fr[0], foot + rad * fr[0]]))
            else:
                ph = np.linspace(0, 2 * math.pi, 1024, endpoint=False)
                out.append(foot + rad * (np.cos(ph)[:, None] * fr[0] + np.sin(ph)[:, None] * fr[1]))
        elif isinstance(p, Sphere):
            pts, _ = p.sample(ball, r / (512 if D == 2 else 64))
            out.append(pts)
            if D == 2:
                out.append(_circle_meets(p.center, p.radius, xi, r))
            else:
                v = xi - p.center
                dist = float(np.linalg.norm(v))
                if dist > 0:
                    k = (dist ** 2 + p.radius ** 2 - r ** 2) / (2 * p.radius * dist)
                    if -1 < k < 1:
                        ax = v / dist
                        fr = tangent_frame(ax)
                        s = math.sqrt(1 - k * k)
                        ph = np.linspace(0, 2 * math.pi, 1024, endpoint=False)
                        out.append(p.center + p.radius * (k * ax + s * (
                            np.cos(ph)[:, None] * fr[0] + np.sin(ph)[:, None] * fr[1])))
        else:
            out.append(p.sample(ball, r / 256)[0])
    pts = np.vstack([xi[None]] + [o for o in out if len(o)])
    return pts[np.linalg.norm(pts - xi, axis=1) <= r * (1 + 1e-9)]


def _support(rel):
    """Rows of rel that can realize max |rel . n| (hull vertices), origin included."""
    if len(rel) <= 8:
        return rel
    try:
        h = ConvexHull(np.vstack([rel, np.zeros((1, rel.shape[1]))]))
        v = h.vertices[h.vertices < len(rel)]
        return rel[v]
    except QhullError:
        return rel


def _sup(P, normals):
    return np.max(np.abs(P @ np.atleast_2d(normals).T), axis=0)


def _golden(f, lo, hi, tol):
    g = (math.sqrt(5) - 1) / 2
    a, b = hi - g * (hi - lo), lo + g * (hi - lo)
    fa, fb = f(a), f(b)
    while hi - lo > tol:
        if fa <= fb:
            hi, b, fb = b, a, fa
            a = hi - g * (hi - lo)
            fa = f(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + g * (hi - lo)
            fb = f(b)
    x = 0.5 * (lo + hi)
    return x, f(x)


def _best_normal(P, rel, tol=1e-4):
    """Normal minimizing max |P n|; PCA start, then a local rotation search."""
    D = P.shape[1]
    M = rel.T @ rel
    w, V = np.linalg.eigh(M)
    n0 = V[:, 0]
    if D == 2:
        def f(phi):
            return float(_sup(P, [math.cos(phi), math.sin(phi)])[0])

        phis = np.linspace(0, math.pi, 180, endpoint=False)
        phis = np.append(phis, math.atan2(n0[1], n0[0]) % math.pi)
        vals = _sup(P, np.column_stack([np.cos(phis), np.sin(phis)]))
        best = (math.inf, 0.0)
        h = math.pi / 180
        for k in np.argsort(vals, kind="stable")[:3]:
            phi, v = _golden(f, phis[k] - h, phis[k] + h, tol * 1e-3)
            if v < best[0]:
                best = (v, phi)
        return np.array([math.cos(best[1]), math.sin(best[1])]), best[0]
    # S^2: Fibonacci candidates on the upper hemisphere plus the PCA normal
    k = 1500
    i = np.arange(k) + 0.5
    z = i / k
    ph = math.pi * (1 + math.sqrt(5)) * i
    s = np.sqrt(1 - z * z)
    cand = np.vstack([np.column_stack([s * np.cos(ph), s * np.sin(ph), z]), n0])
    vals = _sup(P, cand)
    best_n, best_v = None, math.inf
    for j in np.argsort(vals, kind="stable")[:3]:
        n, v = cand[j], vals[j]
        step = 0.05
        while step > tol * 1e-2:
            fr = tangent_frame(n)
            trial = np.array([n * math.cos(step) + sg * math.sin(step) * e
                              for e in fr for sg in (1.0, -1.0)])
            tv = _sup(P, trial)
            m = int(np.argmin(tv))
            if tv[m] < v:
                n, v = unit(trial[m]), float(tv[m])
            else:
                step /= 2
        if v < best_v:
            best_n, best_v = n, v
    return best_n, best_v


def flatness(scene: Scene, xi, r, check=True):
    """(beta, V): least sup-distance ratio of Sigma & B(xi, r) to a d-plane through xi."""
    xi = _require_on_sigma(scene, xi) if check else np.asarray(xi, float)
    if r <= 10 * scene.resolution:
        raise ResolutionError(f"radius {r} must exceed 10 x scene resolution "
                              f"{scene.resolution}", stage="flatness")
    pts = local_points(scene, xi, r)
    if len(pts) <= 1:
        raise ResolutionError(f"no boundary samples in B({xi.tolist()}, {r})", stage="flatness")
    rel = pts - xi
    n, v = _best_normal(_support(rel), rel)
    return float(v / r), Plane(xi.copy(), n)


# --------------------------------------------------------------------------
# contingent directions


def _clusters(u, tol):
    """Group unit vectors whose chains of neighbours are within angle tol."""
    if len(u) == 0:
        return []
    D = u.shape[1]
    if D == 2:
        ang = np.arctan2(u[:, 1], u[:, 0])
        order = np.argsort(ang, kind="stable")
        a = ang[order]
        gaps = np.diff(np.append(a, a[0] + 2 * math.pi))
        cut = np.nonzero(gaps > tol)[0]
        if len(cut) == 0:
            groups = [order]
        else:
            start = (cut[-1] + 1) % len(a)
            seq = np.roll(np.arange(len(a)), -start)
            cut_set = set(cut.tolist())
            groups, cur = [], []
            for k in seq:
                cur.append(order[k])
                if k in cut_set:
                    groups.append(np.array(cur))
                    cur = []
            if cur:
                groups.append(np.array(cur))
    else:
        # one representative per tol/4 box keeps the neighbour graph small
        _, rep, inv = np.unique(np.floor(u / (tol / 4)).astype(np.int64), axis=0,
                                return_index=True, return_inverse=True)
        chord = 2 * math.sin(tol / 2)
        ur = u[rep]
        pairs = cKDTree(ur).query_pairs(chord, output_type="ndarray")
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])) if len(pairs) else
                       (np.zeros(0), (np.zeros(0, int), np.zeros(0, int))), shape=(len(ur), len(ur)))
        _, lab = connected_components(g, directed=False)
        lab = lab[np.ravel(inv)]
        groups = [np.nonzero(lab == k)[0] for k in np.unique(lab)]
    out = []
    for gi in groups:
        m = u[gi].sum(axis=0)
        nm = np.linalg.norm(m)
        mean = m / nm if nm > 0 else u[gi[0]]
        spread = float(np.max(np.arccos(np.clip(u[gi] @ mean, -1, 1))))
        out.append({"direction": mean, "spread": spread, "count": int(len(gi))})
    out.sort(key=lambda c: tuple(-c["direction"]))
    return out


@dataclass
class ContingentReport:
    xi: np.ndarray
    radii: list
    clusters: list  # per radius: list of {direction, spread, count}
    tolerance: float

    @property
    def directions(self):
        return [c["direction"] for c in self.clusters[-1]] if self.clusters else []

    def to_dict(self):
        return {"xi": self.xi.tolist(), "radii": list(self.radii), "tolerance": self.tolerance,
                "clusters": [[{"direction": c["direction"].tolist(), "spread": c["spread"],
                               "count": c["count"]} for c in row] for row in self.clusters]}


def contingent_sample(scene: Scene, xi, radii, tol=0.1, resolution=None) -> ContingentReport:
    """Directions (zeta - xi)/|zeta - xi| for boundary samples near xi, one row per radius."""
    xi = _require_on_sigma(scene, xi)
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise InvalidInput("radii must be strictly decreasing")
    rows = []
    for r in radii:
        res = r / 256 if resolution is None else resolution
        S = scene.sample_boundary(Ball(xi, r), res).points
        pts = np.vstack([S, local_points(scene, xi, r)])
        v = pts - xi
        n = np.linalg.norm(v, axis=1)
        keep = (n > r * 1e-6) & (n <= r * (1 + 1e-12))
        rows.append(_clusters(v[keep] / n[keep, None], tol))
    return ContingentReport(xi, radii, rows, tol)


# --------------------------------------------------------------------------
# two-sided visible directions


def _pair_names(scene, ids):
    names = list(scene.labels)
    return [names[i] if i >= 0 else BOUNDARY for i in ids]


def two_sided_directions(scene: Scene, xi, grid, t, check=True):
    """{(label_i, label_j): node indices} with (xi, xi + t theta) in i and (xi, xi - t theta) in j."""
    xi = _require_on_sigma(scene, xi) if check else np.asarray(xi, float)
    if not 0 < t < scene.diameter:
        raise InvalidInput("t must lie in (0, diam)")
    th = grid.nodes
    fwd, bwd = xi + t * th, xi - t * th
    inside = ((np.linalg.norm(fwd - scene.window.center, axis=1) <= scene.window.radius)
              & (np.linalg.norm(bwd - scene.window.center, axis=1) <= scene.window.radius))
    P = np.broadcast_to(xi, th.shape)
    clear = inside.copy()
    for end in (fwd, bwd):
        hit = np.full(len(th), np.inf)
        hit[inside] = scene.cast(P[inside], end[inside], open_start=True)
        clear &= ~np.isfinite(hit)
    return _group_pairs(scene, xi, th, np.nonzero(clear)[0], t)


def _group_pairs(scene, xi, nodes, idx, t):
    if len(idx) == 0:
        return {}
    th = nodes[idx]
    i = scene.component_ids(xi + 0.5 * t * th, check=False)
    j = scene.component_ids(xi - 0.5 * t * th, check=False)
    ni, nj = _pair_names(scene, i), _pair_names(scene, j)
    out = {}
    for k, key in enumerate(zip(ni, nj)):
        out.setdefault(key, []).append(int(idx[k]))
    return {key: np.asarray(v, dtype=np.int64) for key, v in sorted(out.items())}


# --------------------------------------------------------------------------
# pipeline


@dataclass
class TangentReport:
    xi: np.ndarray
    curve: list
    plane: Plane | None
    classified: str
    cone: dict | None = None
    index: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.classified not in CLASSES:
            raise InvalidInput(f"classification must be one of {CLASSES}")

    def to_dict(self):
        return {"xi": np.asarray(self.xi).tolist(), "index": self.index,
                "curve": [[float(r), float(b)] for r, b in self.curve],
                "plane": self.plane.to_dict() if self.plane is not None else None,
                "classified": self.classified, "cone": self.cone, "extra": self.extra}


def _frame_from_witnesses(w1: Ball, w2: Ball):
    D = len(w1.center)
    e = np.eye(D)[-1]
    R = rotation_taking(unit(w2.center - w1.center), e)
    return R, w1.center.copy(), float(np.linalg.norm(w2.center - w1.center))


@dataclass
class _Context:
    scene: Scene          # normalized
    original: Scene
    R: np.ndarray
    shift: np.ndarray
    grid: object
    t: float
    s: float
    eta: float
    upsilon: float
    C: float
    radii: list
    threshold: float
    cache: dict = field(default_factory=dict)

    def forward(self, x):
        return (np.atleast_2d(x) - self.shift) @ self.R.T

    def backward(self, y):
        return np.atleast_2d(y) @ self.R + self.shift


def _flat_curve(ctx, xi):
    curve, plane = [], None
    for r in ctx.radii:
        b, V = flatness(ctx.scene, xi, r, check=False)
        curve.append((r, b))
        plane = V
    return curve, plane


def _is_flat(curve, threshold):
    betas = [b for _, b in curve]
    small = all(b <= threshold for b in betas)
    trend = all(b1 <= b0 + 1e-9 for b0, b1 in zip(betas, betas[1:]))
    return small and trend


def _classify(ctx: _Context, xi, gaps_col, index=None, weight=None):
    """Run one boundary point through porosity, the cone pair and flatness."""
    grid = ctx.grid
    extra = {"theta_t_weight": float(grid.weights @ (ctx.t < gaps_col))}
    if weight is not None:
        extra["weight"] = float(weight)
    curve, plane = _flat_curve(ctx, xi)
    flat = _is_flat(curve, ctx.threshold)
    back_plane = None
    if plane is not None:
        back_plane = Plane(ctx.backward(plane.point)[0], plane.normal @ ctx.R)
    orig = ctx.backward(xi)[0]
    idx = np.nonzero(ctx.t < gaps_col)[0]
    pairs = _group_pairs(ctx.scene, xi, grid.nodes, idx, ctx.t)
    cone = None
    if pairs:
        key, A = max(pairs.items(), key=lambda kv: (float(grid.weights[kv[1]].sum()),
                                                    kv[0][0] != kv[0][1]))
        mask = np.zeros(len(grid), bool)
        mask[A] = True
        kappa = float(grid.weights[A].sum()) / grid.cap_measure
        ck = mask.tobytes()
        if ck not in ctx.cache:
            ctx.cache[ck] = find_dense_cap(mask, grid, ctx.eta, kappa * (1 - 1e-9),
                                           check_resolution=False)
        por = ctx.cache[ck]
        alpha = ctx.upsilon * por.r
        extra.update({"pair": list(key), "pair_weight": float(grid.weights[A].sum()),
                      "r_A": float(por.r), "level": int(por.level),
                      "porosity_certified": bool(por.certified)})
        if alpha > 0:
            h = ctx.t / 2
            c1, c2 = two_sided_cone(ctx.scene, xi, por.theta, alpha, h, step=alpha * h / 8,
                                    C=ctx.C, witness=False)
            both = bool(c1.contained and c2.contained)
            cone = {"axis": (por.theta @ ctx.R).tolist(), "alpha": float(alpha),
                    "height": float(h), "both_empty": both,
                    "margins": [c1.margin, c2.margin]}
    if cone is not None and cone["both_empty"] and flat:
        cls = "tangent-candidate"
    elif not flat:
        cls = "non-flat"
    else:
        cls = "undetermined"
    return TangentReport(orig, curve, back_plane, cls, cone, index, extra)


@dataclass
class DetectResult:
    flagged: BoundarySample
    fraction: float
    reports: list
    sample: BoundarySample
    choice: dict
    params: dict
    two_ball: dict
    timings: dict
    context: _Context | None = None

    @property
    def flagged_indices(self):
        return [r.index for r in self.reports if r.classified == "tangent-candidate"]

    def classify(self, xi):
        """Classify an arbitrary boundary point with the detector's frame and parameters."""
        ctx = self.context
        xi = _require_on_sigma(ctx.original, xi)
        y = ctx.forward(xi)[0]
        gaps = fiber_gaps(ctx.scene, ctx.grid.nodes, np.repeat(y[None], len(ctx.grid), 0))
        return _classify(ctx, y, gaps)

    def to_dict(self):
        counts = {c: sum(r.classified == c for r in self.reports) for c in CLASSES}
        return {"fraction": self.fraction, "flagged": self.flagged.to_dict(),
                "flagged_indices": self.flagged_indices, "counts": counts,
                "sample_size": len(self.sample), "sample_weight": self.sample.total,
                "choice": self.choice, "params": self.params, "two_ball": self.two_ball,
                "timings": self.timings, "reports": [r.to_dict() for r in self.reports]}


def _recenter(scene, B):
    d, near = scene.nearest(B.center[None])
    d = float(d[0])
    if d <= max(scene.eps, 1e-7 * scene.window.radius):
        return B, None
    if d >= B.radius * 0.9:
        raise InvalidInput(f"ball center is {d:.3g} from Sigma; need < 0.9 x radius")
    return Ball(near[0], B.radius - d), {"center": B.center.tolist(), "radius": B.radius}


def _lattice_choice(G, wts, grid, r, ks, ms):
    """t, s maximizing weight of E_{t,s}; ties go to larger t, then larger s."""
    table = []
    best = None
    for k in ks:
        t = r * 2.0 ** -k
        tw = grid.weights @ (t < G)
        for m in ms:
            s = grid.cap_measure * 2.0 ** -m
            w = float(wts[tw > s].sum())
            table.append({"k": k, "m": m, "t": t, "s": s, "weight": w})
            key = (w, t, s)
            if best is None or key > best[0]:
                best = (key, t, s, w)
    return best[1], best[2], best[3], table


def default_detect_grid(d):
    return 64 if d == 1 else 16


def detect(scene: Scene, B: Ball, C=3.0, grid_n=None, resolution=None, threshold=THRESHOLD,
           levels=8, upsilon=UPSILON, lattice=(range(1, 7), range(1, 7)), keep_context=True):
    """Two-ball frame, visibility with gaps, E_{t,s} selection, porosity, cones, flatness."""
    t0 = time.perf_counter()
    timings = {}
    B0 = B
    B, moved = _recenter(scene, B)
    r = B.radius
    tb = check_two_ball(scene, B.center, r, C)
    if not tb.holds:
        raise HypothesisViolated(f"two-ball condition fails at C={C} on B", stage="two-ball",
                                 witness=tb.to_dict())
    w1, w2 = tb.witnesses
    R, shift, a = _frame_from_witnesses(w1, w2)
    scn = scene.transformed(R, -R @ shift)
    D = scene.dimension
    d = D - 1
    timings["two_ball"] = time.perf_counter() - t0

    res = r * 1e-3 if resolution is None else float(resolution)
    delta = min(DELTA_CAP, ETA_FRACTION * delta1(C, a, r))
    grid = build_grid(-np.eye(D)[-1], delta, grid_n or default_detect_grid(d))
    T = lemma_hull(r, C, a, D)
    S = scn.sample_boundary(Ball(*T.bounding), res, region=T.contains)
    if len(S) == 0:
        raise ResolutionError("no boundary samples in the two-ball hull", stage="tangents")
    t1 = time.perf_counter()
    k_n, m = len(grid), len(S)
    G = np.empty((k_n, m))
    for k in range(k_n):
        G[k] = fiber_gaps(scn, grid.nodes[k], S.points)
    timings["visibility"] = time.perf_counter() - t1

    t, s, wE, table = _lattice_choice(G, S.weights, grid, r, *lattice)
    E = np.nonzero(grid.weights @ (t < G) > s)[0]

    cut = 10 * scn.resolution
    ladder = [r * 2.0 ** -k for k in range(1, levels + 1)]
    ok = [x for x in ladder if x > cut]
    radii = ok[-FINEST:] if len(ok) >= FINEST else []
    if not radii:
        raise ResolutionError(f"fewer than {FINEST} dyadic radii above 10 x resolution",
                              stage="flatness")
    eta = ETA_FRACTION * upsilon / (4 * C)
    ctx = _Context(scn, scene, R, shift, grid, t, s, eta, upsilon, C, radii, threshold)

    t2 = time.perf_counter()
    reports = []
    inE = np.zeros(m, bool)
    inE[E] = True
    for j in range(m):
        if inE[j]:
            reports.append(_classify(ctx, S.points[j], G[:, j], j, S.weights[j]))
        else:
            reports.append(TangentReport(ctx.backward(S.points[j])[0], [], None,
                                         "undetermined", None, j,
                                         {"weight": float(S.weights[j]), "in_E": False}))
    timings["classify"] = time.perf_counter() - t2

    flag = np.array([rep.classified == "tangent-candidate" for rep in reports])
    S_orig = BoundarySample(ctx.backward(S.points), S.weights.copy(), S.resolution)
    flagged = S_orig.subset(flag) if hasattr(S_orig, "subset") else \
        BoundarySample(S_orig.points[flag], S_orig.weights[flag], S.resolution)
    fraction = float(S.weights[flag].sum() / S.weights.sum())
    timings["total"] = time.perf_counter() - t0
    choice = {"t": t, "s": s, "E_weight": wE, "E_size": int(len(E)), "lattice": table}
    params = {"C": C, "r": r, "a": a, "delta": delta, "grid_n": grid.n, "resolution": res,
              "threshold": threshold, "radii": radii, "finest_scales": FINEST,
              "eta": eta, "upsilon": upsilon, "cutoff": cut, "ball": B0.to_dict(),
              "recentered": moved}
    return DetectResult(flagged, fraction, reports, S_orig, choice, params, tb.to_dict(),
                        timings, ctx if keep_context else None)
