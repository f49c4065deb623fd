"""Hypothesis checks: two-ball, interior/exterior corkscrews, Ahlfors regularity.

Witness searches scan a lattice of candidate centers of spacing r/(4C) and
refine the best ones by a pattern search on the clearance

    g(c) = min(dist(c, forbidden set), r - |c - xi|),

so a ball B(c, r/C) fits iff g(c) >= r/C.  Component membership is always
read from scene labels.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .geometry import ball_volume, tangent_frame
from .scene import Ball, BoundarySample, Scene, SolidPolygons

ACCEPT_RTOL = 1e-9
STALL_RTOL = 1e-3


@dataclass
class ConditionVerdict:
    holds: bool
    constant: float
    witnesses: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    kind: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self):
        def enc(w):
            if isinstance(w, Ball):
                return w.to_dict()
            if isinstance(w, tuple) and isinstance(w[0], Ball):
                return {"ball": w[0].to_dict(), "measure": float(w[1])}
            return w

        return {
            "kind": self.kind,
            "holds": bool(self.holds),
            "constant": _num(self.constant),
            "witnesses": [enc(w) for w in self.witnesses],
            "failures": [{"xi": np.asarray(x).tolist(), "r": float(r)} for x, r in self.failures],
            "details": self.details,
        }


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _moves(D):
    m = np.array([v for v in itertools.product((-1, 0, 1), repeat=D) if any(v)], float)
    return m / np.linalg.norm(m, axis=1)[:, None]


def lattice(center, radius, spacing):
    """Lattice points of the given spacing inside B(center, radius), centered."""
    D = len(center)
    k = int(math.floor(radius / spacing))
    a = np.arange(-k, k + 1) * spacing
    grids = np.meshgrid(*([a] * D), indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    pts = pts[np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)]
    return center + pts


class _Clearance:
    """g(c) for a scene, a ball B(xi, r) and a side rule."""

    def __init__(self, scene: Scene, xi, r, mode="off", label=None):
        self.scene = scene
        self.xi = np.asarray(xi, float)
        self.r = float(r)
        self.mode = mode
        self.label = label
        self._solids = [p for p in scene.primitives if isinstance(p, SolidPolygons)]

    def __call__(self, c):
        c = np.atleast_2d(c)
        room = self.r - np.linalg.norm(c - self.xi, axis=1)
        d = self.scene.distance(c)
        if self.mode == "exterior":
            ids = self.scene.component_ids(c, check=False)
            target = self.scene.label_id(self.label)
            d = np.where(ids == target, 0.0, d)
            for s in self._solids:
                ins = s.inside(c)
                if ins.any():
                    d = np.where(ins, np.maximum(d, s.edge_nearest(c)[0]), d)
        return np.minimum(d, room)


def _refine(g, starts, g0, target, step, min_step, max_iter=400):
    """Pattern search increasing g from each start; moves stay in one component.

    A move of length < g(current) cannot cross Sigma, so the label of the
    refined center equals the label of its start.
    """
    c = np.array(starts, float)
    val = np.array(g0, float)
    D = c.shape[1]
    dirs = _moves(D)
    step = np.full(len(c), float(step))
    for _ in range(max_iter):
        active = (val < target) & (step >= min_step)
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        cand = c[idx, None, :] + step[idx, None, None] * dirs[None]
        gv = g(cand.reshape(-1, D)).reshape(len(idx), len(dirs))
        best = np.argmax(gv, axis=1)
        bv = gv[np.arange(len(idx)), best]
        ok = (bv > val[idx]) & (step[idx] < val[idx])
        for n, k in enumerate(idx):
            if ok[n]:
                c[k] = cand[n, best[n]]
                val[k] = bv[n]
            else:
                step[k] *= 0.5
    return c, val


def chord_clear(scene: Scene, ball: Ball, chords=16):
    """Independent witness check: a net of parallel chords through the ball avoids Sigma.

    Chords are laid along every coordinate direction at ``chords`` offsets per
    transverse axis, shrunk by a relative 1e-9 so tangential contact with the
    container does not register.
    """
    D = len(ball.center)
    R = ball.radius * (1 - 1e-9)
    off = np.linspace(-R, R, chords + 2)[1:-1]
    p, q = [], []
    for k in range(D):
        axis = np.eye(D)[k]
        others = [np.eye(D)[j] for j in range(D) if j != k]
        for o in itertools.product(off, repeat=D - 1):
            v = sum(oi * e for oi, e in zip(o, others))
            h2 = R * R - float(v @ v)
            if h2 <= 0:
                continue
            h = math.sqrt(h2)
            p.append(ball.center + v - h * axis)
            q.append(ball.center + v + h * axis)
    p.append(ball.center)
    q.append(ball.center + R * np.eye(D)[0] * 1e-3)
    p, q = np.array(p), np.array(q)
    return bool(np.all(~np.isfinite(scene.cast(p, q))))


def _require_on_sigma(scene, xi, tol=None):
    xi = np.asarray(xi, float)
    scene.check_window(xi)
    tol = max(scene.eps, 1e-7 * scene.window.radius) if tol is None else tol
    d = float(scene.distance(xi[None])[0])
    if d > tol:
        raise InvalidInput(f"xi={xi.tolist()} is not on the boundary set (distance {d:.3g})")
    return xi


def _require_radius(scene, r):
    if not (0 < r < scene.diameter):
        raise InvalidInput(f"radius r={r} must lie in (0, diam) = (0, {scene.diameter})")


def _search(scene, xi, r, C, mode, label=None, keep=3):
    """Best clearance per label: {label: (g, center)}."""
    rad = r / C
    g = _Clearance(scene, xi, r, mode, label)
    h = r / (4 * C)
    pts = lattice(xi, r - rad * 0.5, h)
    if mode != "exterior" and label is not None:
        pts = pts[scene.component_ids(pts, check=False) == scene.label_id(label)]
        if len(pts) == 0:
            return {}
    gv = g(pts)
    seed = gv >= 0.5 * rad
    if not seed.any():
        seed = gv >= np.max(gv) * 0.999 if np.max(gv) > 0 else seed
    cand, cval = pts[seed], gv[seed]
    if len(cand) == 0:
        return {}
    if mode == "exterior":
        labels = np.zeros(len(cand), dtype=int)
        names = ["exterior"]
    else:
        ids = scene.component_ids(cand, check=False)
        names = list(scene.labels)
        good = ids >= 0
        cand, cval, labels = cand[good], cval[good], ids[good]
        if label is not None:
            want = scene.label_id(label)
            m = labels == want
            cand, cval, labels = cand[m], cval[m], labels[m]
    best = {}
    for k in np.unique(labels):
        m = np.nonzero(labels == k)[0]
        order = m[np.lexsort((cand[m, -1], cand[m, 0], -cval[m]))][:keep]
        c, v = _refine(g, cand[order], cval[order], rad, h / 2, rad * 1e-6)
        i = int(np.argmax(v))
        best[names[int(k)]] = (float(v[i]), c[i])
    return best


def check_two_ball(scene: Scene, xi, r, C, verify=True) -> ConditionVerdict:
    """Two balls of radius r/C inside B(xi, r) in two different components."""
    if C < 2:
        raise InvalidInput("the two-ball constant must satisfy C >= 2")
    xi = _require_on_sigma(scene, xi)
    _require_radius(scene, r)
    rad = r / C
    best = _search(scene, xi, r, C, "off")
    ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], kv[0]))
    details = {"xi": xi.tolist(), "r": r, "C": C, "lattice_spacing": r / (4 * C),
               "clearance": {k: v[0] for k, v in ranked}}
    if len(ranked) >= 2 and ranked[1][1][0] >= rad * (1 - ACCEPT_RTOL):
        wit = [Ball(ranked[0][1][1], rad), Ball(ranked[1][1][1], rad)]
        details["labels"] = [ranked[0][0], ranked[1][0]]
        if verify:
            details["chord_check"] = all(chord_clear(scene, w) for w in wit)
        const = r / ranked[1][1][0]
        return ConditionVerdict(True, const, wit, [], "two-ball", details)
    g2 = ranked[1][1][0] if len(ranked) >= 2 else 0.0
    details["stalled_below"] = rad * (1 - STALL_RTOL)
    return ConditionVerdict(False, r / g2 if g2 > 0 else math.inf, [], [(xi, r)],
                            "two-ball", details)


def check_corkscrew(scene: Scene, label, xi, r, C, side="interior", verify=True):
    """Corkscrew ball of radius r/C inside B(xi, r), in (interior) or off (exterior) label."""
    if side not in ("interior", "exterior"):
        raise InvalidInput("side must be 'interior' or 'exterior'")
    scene.label_id(label)
    xi = _require_on_sigma(scene, xi)
    _require_radius(scene, r)
    rad = r / C
    if side == "interior":
        best = _search(scene, xi, r, C, "off", label=label)
        got = best.get(label)
    else:
        best = _search(scene, xi, r, C, "exterior", label=label)
        got = best.get("exterior")
    details = {"xi": xi.tolist(), "r": r, "C": C, "side": side, "label": label,
               "lattice_spacing": r / (4 * C),
               "clearance": got[0] if got else 0.0}
    if got and got[0] >= rad * (1 - ACCEPT_RTOL):
        w = Ball(got[1], rad)
        if verify:
            details["chord_check"] = (chord_clear(scene, w) if side == "interior"
                                      else _exterior_ok(scene, w, label))
        return ConditionVerdict(True, r / got[0], [w], [], "corkscrew", details)
    details["stalled_below"] = rad * (1 - STALL_RTOL)
    const = r / got[0] if got and got[0] > 0 else math.inf
    return ConditionVerdict(False, const, [], [(xi, r)], "corkscrew", details)


def _exterior_ok(scene, ball, label, n=64):
    """Exterior witness check: sampled points of the ball are never in ``label``."""
    D = len(ball.center)
    pts = lattice(ball.center, ball.radius * (1 - 1e-9), 2 * ball.radius / n)
    ids = scene.component_ids(pts, check=False)
    return bool(np.all(ids != scene.label_id(label)))


def estimate_regularity(scene: Scene, samples, resolution=None) -> ConditionVerdict:
    """Smallest A with r^d/A <= H^d(B(xi,r) & Sigma)/w_d <= A r^d over the samples."""
    samples = list(samples)
    if not samples:
        raise InvalidInput("regularity needs at least one (xi, r) sample")
    d = scene.d
    wd = ball_volume(d)
    A = 1.0
    wit, fail = [], []
    ratios = []
    for xi, r in samples:
        xi = _require_on_sigma(scene, xi)
        _require_radius(scene, r)
        res = resolution if resolution is not None else r / 200
        b = Ball(xi, r)
        m = scene.boundary_measure(b, min(res, r / 10))
        q = m / (wd * r ** d)
        ratios.append(q)
        if q <= 0:
            fail.append((xi, r))
            continue
        A = max(A, q, 1 / q)
        wit.append((b, m))
    details = {"normalization": "w_d r^d", "w_d": wd, "ratios": ratios,
               "ratio_min": min(ratios), "ratio_max": max(ratios)}
    holds = not fail
    return ConditionVerdict(holds, A if holds else math.inf, wit, fail, "regularity", details)


def boundary_points(scene: Scene, n, region: Ball | None = None, resolution=None):
    """n deterministic points of Sigma, evenly spaced in sample weight."""
    region = region or scene.window
    res = resolution or region.radius / 2000
    S = scene.sample_boundary(region, res)
    if len(S) == 0:
        raise InvalidInput("no boundary inside the sampling region")
    cum = np.cumsum(S.weights)
    pos = (np.arange(n) + 0.5) / n * cum[-1]
    return S.points[np.searchsorted(cum, pos).clip(0, len(S) - 1)]


def sample_pairs(scene: Scene, n, r_min=None, r_max=None, inner=0.5):
    """(xi, r) pairs on Sigma inside the inner window, radii on a geometric ladder."""
    R = scene.window.radius
    pts = boundary_points(scene, n, Ball(scene.window.center, inner * R))
    r_max = r_max or 0.25 * R
    r_min = r_min or r_max / 8
    radii = np.geomspace(r_min, r_max, max(1, min(n, 4)))
    return [(p, float(radii[k % len(radii)])) for k, p in enumerate(pts)]


def inscribed_radius(scene: Scene, label, xi, r, spacing):
    """Largest clearance of a lattice point in label within B(xi, r) (brute force)."""
    pts = lattice(np.asarray(xi, float), r, spacing)
    ids = scene.component_ids(pts, check=False)
    mask = ids == scene.label_id(label)
    if not mask.any():
        return 0.0, None
    g = np.minimum(scene.distance(pts[mask]), r - np.linalg.norm(pts[mask] - xi, axis=1))
    k = int(np.argmax(g))
    return float(g[k]), pts[mask][k]
