"""Analytic scenes: a closed set Sigma, its complement components, queries.

A :class:`Scene` is a list of primitives (hyperplanes, spheres, planar
polylines, Lipschitz graphs, filled polygons) clipped to a window ball.
Component labels are fixed at construction: analytically for a single
primitive with a well-defined side, by flood fill on a cell grid otherwise.
Scenes are immutable; every query is read-only.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import InvalidInput, OutOfWindow
from .geometry import tangent_frame
from .kernels import SegmentSoup

BOUNDARY = "boundary"
MAX_DEPTH = 12


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float
    closed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise InvalidInput(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, points, slack=0.0):
        d = np.linalg.norm(np.atleast_2d(points) - self.center, axis=1)
        if self.closed:
            return d <= self.radius + slack
        return d < self.radius + slack

    def scaled(self, factor):
        return Ball(self.center, self.radius * factor, self.closed)

    def to_dict(self):
        return {"center": self.center.tolist(), "radius": self.radius}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["center"], float), float(d["radius"]))


@dataclass(frozen=True)
class Segment:
    a: np.ndarray
    b: np.ndarray
    open_a: bool = False
    open_b: bool = False

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if np.array_equal(self.a, self.b):
            raise InvalidInput("segment endpoints coincide")

    @classmethod
    def open(cls, a, b):
        return cls(a, b, True, True)

    @property
    def length(self):
        return float(np.linalg.norm(self.b - self.a))


@dataclass
class BoundarySample:
    """Weighted points on Sigma; the weights approximate H^d of the patch."""

    points: np.ndarray
    weights: np.ndarray
    resolution: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)

    def __len__(self):
        return len(self.weights)

    @property
    def total(self):
        return float(self.weights.sum())

    def subset(self, mask):
        mask = np.asarray(mask)
        return BoundarySample(self.points[mask], self.weights[mask], self.resolution)

    def to_dict(self):
        return {"points": self.points.tolist(), "weights": self.weights.tolist(),
                "resolution": self.resolution}

    @classmethod
    def from_dict(cls, d):
        pts = np.asarray(d["points"], float)
        return cls(pts.reshape(len(pts), -1) if len(pts) else np.zeros((0, 2)),
                   np.asarray(d["weights"], float), float(d["resolution"]))


# --------------------------------------------------------------------------
# primitives


def _segment_pieces(a, b, lo, hi, resolution):
    """Split parameter ranges [lo, hi] of edges a->b into <= resolution pieces."""
    lengths = np.linalg.norm(b - a, axis=1) * (hi - lo)
    keep = lengths > 0
    a, b, lo, hi, lengths = a[keep], b[keep], lo[keep], hi[keep], lengths[keep]
    counts = np.maximum(1, np.ceil(lengths / resolution - 1e-9)).astype(np.int64)
    eid = np.repeat(np.arange(len(a)), counts)
    k = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    frac = (k + 0.5) / counts[eid]
    s = lo[eid] + frac * (hi[eid] - lo[eid])
    pts = a[eid] + s[:, None] * (b[eid] - a[eid])
    w = lengths[eid] / counts[eid]
    return pts, w


def _clip_params(a, b, ball):
    """Parameter interval of each edge a->b inside the ball (lo > hi if none)."""
    d = b - a
    f = a - ball.center
    A = np.sum(d * d, axis=1)
    B = 2 * np.sum(f * d, axis=1)
    Cq = np.sum(f * f, axis=1) - ball.radius ** 2
    disc = B * B - 4 * A * Cq
    ok = (disc >= 0) & (A > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    safeA = np.where(A > 0, A, 1.0)
    t0 = np.where(ok, (-B - sq) / (2 * safeA), 1.0)
    t1 = np.where(ok, (-B + sq) / (2 * safeA), 0.0)
    return np.clip(t0, 0.0, 1.0), np.clip(t1, 0.0, 1.0), ok


def _seg_dist(p, a, b):
    """Distance (and nearest points) from points p[..., :] to segments a->b."""
    ab = b - a
    den = np.sum(ab * ab, axis=-1)
    u = np.clip(np.sum((p - a) * ab, axis=-1) / np.where(den > 0, den, 1.0), 0.0, 1.0)
    near = a + u[..., None] * ab
    return np.linalg.norm(p - near, axis=-1), near


def _points_in_polygon(points, verts):
    """Even-odd rule, vectorized over edges."""
    x, y = points[:, 0][:, None], points[:, 1][:, None]
    a = verts
    b = np.roll(verts, -1, axis=0)
    out = np.zeros(len(points), dtype=bool)
    step = max(1, 2_000_000 // max(len(verts), 1))
    for s in range(0, len(points), step):
        xs, ys = x[s:s + step], y[s:s + step]
        cond = (a[:, 1] > ys) != (b[:, 1] > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[:, 0] + (ys - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
        out[s:s + step] = (np.sum(cond & (xs < xint), axis=1) % 2) == 1
    return out


class Primitive:
    kind = "?"
    side_labels: tuple | None = None

    def side(self, points):  # pragma: no cover - overridden
        raise NotImplementedError


@dataclass(frozen=True)
class HalfSpace(Primitive):
    """Sigma = {x : x . normal = offset}; sides named by ``labels``."""

    normal: np.ndarray
    offset: float = 0.0
    labels: tuple = ("upper", "lower")
    kind = "halfspace"

    def __post_init__(self):
        n = np.asarray(self.normal, float)
        n = n / np.linalg.norm(n)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self):
        return len(self.normal)

    @property
    def side_labels(self):
        return self.labels

    def side(self, points):
        return np.where(points @ self.normal - self.offset > 0, 0, 1)

    def nearest(self, points):
        f = points @ self.normal - self.offset
        return np.abs(f), points - f[:, None] * self.normal

    def hits(self, p, q, tmin, eps):
        fa = p @ self.normal - self.offset
        fb = q @ self.normal - self.offset
        den = fa - fb
        # eps-thickened slab |f| <= eps: hit where the segment first enters it
        f0 = fa - tmin * den
        side = np.sign(f0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(den != 0, (fa - side * eps) / np.where(den != 0, den, 1.0), np.inf)
        t = np.where((t >= tmin) & (t <= 1.0) & (side * den > 0), t, np.inf)
        return np.where(np.abs(f0) <= eps, tmin, t)

    def sample(self, ball, resolution):
        D = self.dim
        f = ball.center @ self.normal - self.offset
        if abs(f) >= ball.radius:
            return np.zeros((0, D)), np.zeros(0)
        foot = ball.center - f * self.normal
        rad = math.sqrt(ball.radius ** 2 - f * f)
        frame = tangent_frame(self.normal)
        if D == 2:
            a = foot - rad * frame[0]
            b = foot + rad * frame[0]
            return _segment_pieces(a[None], b[None], np.zeros(1), np.ones(1), resolution)
        n = max(1, int(math.ceil(2 * rad / resolution)))
        h = 2 * rad / n
        g = -rad + h * (np.arange(n) + 0.5)
        U, V = np.meshgrid(g, g, indexing="ij")
        keep = U ** 2 + V ** 2 <= rad ** 2
        pts = foot + U[keep][:, None] * frame[0] + V[keep][:, None] * frame[1]
        return pts, np.full(len(pts), h * h)

    def transformed(self, R, t):
        n = R @ self.normal
        return HalfSpace(n, float(self.offset + n @ t), self.labels)

    def to_dict(self):
        return {"kind": self.kind, "normal": self.normal.tolist(), "offset": self.offset,
                "labels": list(self.labels)}


@dataclass(frozen=True)
class Sphere(Primitive):
    """Sigma = {x : |x - center| = radius} (a circle in the plane)."""

    center: np.ndarray
    radius: float
    labels: tuple = ("inside", "outside")
    kind = "sphere"

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, float))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self):
        return len(self.center)

    @property
    def side_labels(self):
        return self.labels

    def side(self, points):
        return np.where(np.linalg.norm(points - self.center, axis=1) < self.radius, 0, 1)

    def nearest(self, points):
        v = points - self.center
        n = np.linalg.norm(v, axis=1)
        safe = np.where(n > 0, n, 1.0)
        u = np.where(n[:, None] > 0, v / safe[:, None], np.eye(self.dim)[0])
        return np.abs(n - self.radius), self.center + self.radius * u

    def hits(self, p, q, tmin, eps):
        d = q - p
        f = p - self.center
        A = np.sum(d * d, axis=1)
        B = 2 * np.sum(f * d, axis=1)
        Cq = np.sum(f * f, axis=1) - self.radius ** 2
        disc = B * B - 4 * A * Cq
        sq = np.sqrt(np.maximum(disc, 0.0))
        point = A == 0
        A = np.where(point, 1.0, A)
        t0 = (-B - sq) / (2 * A)
        t1 = (-B + sq) / (2 * A)
        # grazing: closest approach within eps of the sphere counts as a touch
        tc = -B / (2 * A)
        closest = np.linalg.norm(f + tc[:, None] * d, axis=1)
        graze = (disc < 0) & (np.abs(closest - self.radius) <= eps)
        t0 = np.where(graze, tc, t0)
        t1 = np.where(graze, tc, t1)
        real = (disc >= 0) | graze
        out = np.full(len(p), np.inf)
        for t in (t1, t0):
            ok = real & (t >= tmin) & (t <= 1.0)
            out = np.where(ok, t, out)
        # start point inside the eps-shell
        start = f + tmin[:, None] * d
        on = np.abs(np.linalg.norm(start, axis=1) - self.radius) <= eps
        out = np.where(on, tmin, np.where(point, np.inf, out))
        return out

    def sample(self, ball, resolution):
        D = self.dim
        v = ball.center - self.center
        dist = float(np.linalg.norm(v))
        rho = self.radius
        if dist < 1e-15:
            k = -2.0 if rho <= ball.radius else 2.0
            axis = np.eye(D)[-1]
        else:
            k = (dist ** 2 + rho ** 2 - ball.radius ** 2) / (2 * rho * dist)
            axis = v / dist
        if k > 1:
            return np.zeros((0, D)), np.zeros(0)
        half = math.pi if k <= -1 else math.acos(k)
        frame = tangent_frame(axis)
        if D == 2:
            n = max(1, int(math.ceil(2 * half * rho / resolution)))
            ang = -half + (np.arange(n) + 0.5) * (2 * half / n)
            pts = self.center + rho * (np.cos(ang)[:, None] * axis + np.sin(ang)[:, None] * frame[0])
            return pts, np.full(n, 2 * half * rho / n)
        npol = max(1, int(math.ceil(half * rho / resolution)))
        edges = np.linspace(0.0, half, npol + 1)
        pts, w = [], []
        for i in range(npol):
            ring_w = rho * rho * (math.cos(edges[i]) - math.cos(edges[i + 1]))
            mid = 0.5 * (edges[i] + edges[i + 1])
            naz = max(1, int(math.ceil(2 * math.pi * rho * math.sin(mid) / resolution)))
            az = (np.arange(naz) + 0.5) * (2 * math.pi / naz)
            dirs = (math.cos(mid) * axis + math.sin(mid) * (np.cos(az)[:, None] * frame[0]
                                                             + np.sin(az)[:, None] * frame[1]))
            pts.append(self.center + rho * dirs)
            w.append(np.full(naz, 2 * math.pi * ring_w / naz))
        return np.vstack(pts), np.concatenate(w)

    def transformed(self, R, t):
        return Sphere(R @ self.center + t, self.radius, self.labels)

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius,
                "labels": list(self.labels)}


class _EdgeSet:
    """Shared machinery for primitives made of planar edges."""

    def _init_edges(self, ea, eb):
        self._ea = np.ascontiguousarray(ea, float)
        self._eb = np.ascontiguousarray(eb, float)
        # long edges are split into pieces so every tree point stands for a
        # short piece; this keeps the midpoint distance bound tight
        lengths = np.linalg.norm(self._eb - self._ea, axis=1)
        piece = max(float(np.median(lengths)), float(lengths.sum()) / 4e6)
        counts = np.maximum(1, np.ceil(lengths / piece)).astype(np.int64)
        owner = np.repeat(np.arange(len(lengths)), counts)
        k = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        frac = (k + 0.5) / counts[owner]
        mid = self._ea[owner] + frac[:, None] * (self._eb - self._ea)[owner]
        self._owner = owner
        self._halfmax = 0.5 * float((lengths / counts).max())
        self._tree = cKDTree(mid)
        self._soups = None

    def soup(self, eps):
        """Bucketed edges for casts (eps > 0) or nearest queries (eps = 0)."""
        if self._soups is None:
            self._soups = {}
        if eps not in self._soups:
            self._soups[eps] = SegmentSoup(self._ea, self._eb, eps)
        return self._soups[eps]

    @property
    def dim(self):
        return 2

    def edge_nearest(self, points):
        ea, eb = self._ea, self._eb
        n = len(ea)
        m = len(points)
        if n <= 64:
            best_d = np.full(m, np.inf)
            best_p = np.zeros((m, 2))
            for s in range(0, m, 20000):
                P = points[s:s + 20000, None, :]
                d, near = _seg_dist(P, ea[None], eb[None])
                i = np.argmin(d, axis=1)
                r = np.arange(len(i))
                best_d[s:s + 20000] = d[r, i]
                best_p[s:s + 20000] = near[r, i]
            return best_d, best_p
        # seed: exact distance to the edge owning the nearest tree piece
        _, idx = self._tree.query(points, 1, workers=-1)
        e0 = self._owner[idx]
        d0, _ = _seg_dist(points, ea[e0], eb[e0])
        upper = d0 * (1 + 1e-12) + 1e-300
        dist, edge, u, cert = self.soup(0.0).nearest(points, upper)
        edge = np.where(edge < 0, e0, edge)
        for j in np.nonzero(cert == 0)[0]:
            cand = self._tree.query_ball_point(
                points[j], (float(dist[j]) + self._halfmax) * (1 + 1e-9) + 1e-300)
            cand = np.unique(self._owner[np.asarray(cand, dtype=np.int64)])
            dd, _ = _seg_dist(points[j][None], ea[cand], eb[cand])
            edge[j] = cand[int(np.argmin(dd))]
        best_d, best_p = _seg_dist(points, ea[edge], eb[edge])
        return best_d, best_p

    def edge_distance_lower(self, points, cap=np.inf):
        """Cheap lower bound on min(distance to the edges, cap)."""
        if len(self._ea) <= 64:
            return np.minimum(self.edge_nearest(points)[0], cap)
        dmid, _ = self._tree.query(points, 1, distance_upper_bound=cap + self._halfmax,
                                   workers=-1)
        return np.minimum(np.maximum(dmid - self._halfmax, 0.0), cap)

    def edge_hits(self, p, q, tmin, eps):
        return self.soup(eps).first_hits(p, q, tmin)

    def edge_sample(self, ball, resolution):
        lo, hi, ok = _clip_params(self._ea, self._eb, ball)
        keep = ok & (hi > lo)
        if not keep.any():
            return np.zeros((0, 2)), np.zeros(0)
        return _segment_pieces(self._ea[keep], self._eb[keep], lo[keep], hi[keep], resolution)


class Polyline(_EdgeSet, Primitive):
    """Planar polyline; a closed one bounds an inside and an outside."""

    kind = "polyline"

    def __init__(self, vertices, closed=False, labels=("inside", "outside")):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise InvalidInput("polylines are planar: vertices must be (k, 2)")
        self.closed = bool(closed)
        self.labels = tuple(labels)
        v = self.vertices
        if self.closed:
            self._init_edges(v, np.roll(v, -1, axis=0))
        else:
            self._init_edges(v[:-1], v[1:])

    @property
    def side_labels(self):
        return self.labels if self.closed else None

    def side(self, points):
        return np.where(_points_in_polygon(points, self.vertices), 0, 1)

    def nearest(self, points):
        return self.edge_nearest(points)

    def distance_lower(self, points, cap=np.inf):
        return self.edge_distance_lower(points, cap)

    def hits(self, p, q, tmin, eps):
        return self.edge_hits(p, q, tmin, eps)

    def sample(self, ball, resolution):
        return self.edge_sample(ball, resolution)

    def transformed(self, R, t):
        return Polyline(self.vertices @ R.T + t, self.closed, self.labels)

    def to_dict(self):
        return {"kind": self.kind, "vertices": self.vertices.tolist(), "closed": self.closed,
                "labels": list(self.labels)}


class Graph(Polyline):
    """Sampled Lipschitz graph y = f(x); sides ``above``/``below``."""

    kind = "graph"

    def __init__(self, xs, ys, labels=("above", "below")):
        self.xs = np.asarray(xs, float)
        self.ys = np.asarray(ys, float)
        super().__init__(np.column_stack([self.xs, self.ys]), closed=False, labels=labels)

    @property
    def side_labels(self):
        return self.labels

    def side(self, points):
        f = np.interp(points[:, 0], self.xs, self.ys)
        return np.where(points[:, 1] > f, 0, 1)

    def transformed(self, R, t):
        return Polyline(self.vertices @ R.T + t, False, self.labels)

    def to_dict(self):
        return {"kind": self.kind, "xs": self.xs.tolist(), "ys": self.ys.tolist(),
                "labels": list(self.labels)}


class SolidPolygons(_EdgeSet, Primitive):
    """Union of filled closed polygons; Sigma is the whole filled set."""

    kind = "solid_polygons"

    def __init__(self, polygons):
        self.polygons = [np.asarray(p, float) for p in polygons]
        ea = np.vstack(self.polygons)
        eb = np.vstack([np.roll(p, -1, axis=0) for p in self.polygons])
        self._init_edges(ea, eb)
        self._boxes = np.array([[p[:, 0].min(), p[:, 1].min(), p[:, 0].max(), p[:, 1].max()]
                                for p in self.polygons])
        self._axis_squares = all(len(p) == 4 and self._is_box(p) for p in self.polygons)

    @staticmethod
    def _is_box(p):
        xs = np.unique(np.round(p[:, 0], 14))
        ys = np.unique(np.round(p[:, 1], 14))
        return len(xs) == 2 and len(ys) == 2

    def inside(self, points):
        if self._axis_squares:
            tree_in = np.zeros(len(points), dtype=bool)
            b = self._boxes
            for s in range(0, len(points), 4096):
                P = points[s:s + 4096, None, :]
                tree_in[s:s + 4096] = np.any((P[..., 0] >= b[:, 0]) & (P[..., 0] <= b[:, 2])
                                             & (P[..., 1] >= b[:, 1]) & (P[..., 1] <= b[:, 3]),
                                             axis=1)
            return tree_in
        out = np.zeros(len(points), dtype=bool)
        for poly in self.polygons:
            out |= _points_in_polygon(points, poly)
        return out

    def nearest(self, points):
        d, near = self.edge_nearest(points)
        ins = self.inside(points)
        d = np.where(ins, 0.0, d)
        near = np.where(ins[:, None], points, near)
        return d, near

    def distance_lower(self, points, cap=np.inf):
        d = self.edge_distance_lower(points, cap)
        return np.where(self.inside(points), 0.0, d)

    def hits(self, p, q, tmin, eps):
        t = self.edge_hits(p, q, tmin, eps)
        start = p + tmin[:, None] * (q - p)
        return np.where(self.inside(start), tmin, t)

    def sample(self, ball, resolution):
        return self.edge_sample(ball, resolution)

    def transformed(self, R, t):
        return SolidPolygons([p @ R.T + t for p in self.polygons])

    def to_dict(self):
        return {"kind": self.kind, "polygons": [p.tolist() for p in self.polygons]}


def primitive_from_dict(d):
    kind = d.get("kind")
    if kind == "halfspace":
        return HalfSpace(np.asarray(d["normal"], float), float(d.get("offset", 0.0)),
                         tuple(d.get("labels", ("upper", "lower"))))
    if kind == "sphere":
        return Sphere(np.asarray(d["center"], float), float(d["radius"]),
                      tuple(d.get("labels", ("inside", "outside"))))
    if kind == "polyline":
        return Polyline(d["vertices"], bool(d.get("closed", False)),
                        tuple(d.get("labels", ("inside", "outside"))))
    if kind == "graph":
        return Graph(d["xs"], d["ys"], tuple(d.get("labels", ("above", "below"))))
    if kind == "solid_polygons":
        return SolidPolygons(d["polygons"])
    raise InvalidInput(f"unknown primitive kind {kind!r}")


@functools.lru_cache(maxsize=4)
def _ring_offsets(rings):
    a = np.arange(-rings, rings + 1)
    A, B = np.meshgrid(a, a, indexing="ij")
    offs = np.column_stack([A.ravel(), B.ravel()])
    r2 = (offs ** 2).sum(axis=1)
    offs = offs[r2 <= rings * rings]
    r2 = (offs ** 2).sum(axis=1)
    return offs[np.lexsort((offs[:, 1], offs[:, 0], r2))]


# --------------------------------------------------------------------------
# scene


class Scene:
    """Closed set Sigma inside a window ball, with labeled complement components."""

    ANALYTIC_EDGE_LIMIT = 4096

    def __init__(self, primitives, window, seeds=None, catalog=None, resolution=0.0,
                 flood_cells=1024):
        self.primitives = tuple(primitives)
        if not self.primitives:
            raise InvalidInput("scene needs at least one primitive")
        self.window = window if isinstance(window, Ball) else Ball.from_dict(window)
        self.dimension = len(self.window.center)
        if self.dimension not in (2, 3):
            raise InvalidInput("ambient dimension must be 2 or 3")
        for p in self.primitives:
            if p.dim != self.dimension:
                raise InvalidInput(f"{p.kind} primitive has dimension {p.dim}, scene has "
                                   f"{self.dimension}")
        self.seeds = {k: np.asarray(v, float) for k, v in (seeds or {}).items()}
        self.catalog = catalog
        self.resolution = float(resolution)
        self.eps = 1e-9 * self.window.radius
        self.eps_open = 1e-7 * self.window.radius
        self.flood_cells = int(flood_cells)
        self._setup_labels()

    # ---- labels

    def _setup_labels(self):
        p = self.primitives[0]
        single = len(self.primitives) == 1 and p.side_labels is not None
        if single and isinstance(p, _EdgeSet) and len(p._ea) > self.ANALYTIC_EDGE_LIMIT:
            single = False
        if single:
            self.labeling = "analytic"
            self.labels = tuple(p.side_labels)
            self._side_names = self.labels
            return
        if self.dimension != 2:
            raise InvalidInput("composite scenes are supported in the plane only")
        self.labeling = "flood"
        self._flood()

    def _flood(self):
        N = self.flood_cells
        R = self.window.radius
        c = self.window.center
        cell = 2 * R / N
        g = c[None, :] - R + cell * (np.arange(N)[:, None] + 0.5)
        X, Y = np.meshgrid(g[:, 0], g[:, 1], indexing="ij")
        centers = np.column_stack([X.ravel(), Y.ravel()])
        inwin = np.linalg.norm(centers - c, axis=1) <= R + cell
        need = cell * math.sqrt(0.5) * 1.0001
        dlow = np.full(len(centers), -1.0)
        dlow[inwin] = self._distance_lower(centers[inwin], cap=2 * need)
        free = inwin & (dlow > need)
        # closed free cells avoid Sigma, so corner contact is a valid path
        lab, n = ndimage.label(free.reshape(N, N), structure=np.ones((3, 3), dtype=int))
        self._grid = {"x0": float(c[0] - R), "y0": float(c[1] - R), "cell": cell, "N": N}
        lab = self._merge_components(lab, n)
        self._cell_label = lab
        n = int(lab.max())
        names = {}
        for name, pt in self.seeds.items():
            i, j = self._cell_index(pt[None])
            k = int(lab[i[0], j[0]])
            if k == 0:
                k = self._fallback_ids(pt[None])[0] + 1
            if k > 0 and k not in names:
                names[k] = name
        counter = 0
        ordered = []
        for k in range(1, n + 1):
            if k in names:
                ordered.append(names[k])
            else:
                ordered.append(f"c{counter}")
                counter += 1
        self.labels = tuple(ordered)

    def _merge_components(self, lab, n, reach=6, per_pair=32):
        """Union grid components joined by a clear segment between cell centers."""
        if n <= 1:
            return lab
        gr = self._grid
        N = gr["N"]
        cand = {}
        for a in range(0, reach + 1):
            for b in range(-reach, reach + 1):
                if (a == 0 and b <= 0) or a * a + b * b > reach * reach:
                    continue
                A = lab[: N - a, max(0, -b): N - max(0, b)]
                B = lab[a:, max(0, b): N + min(0, b)]
                m = (A > 0) & (B > 0) & (A != B)
                if not m.any():
                    continue
                ii, jj = np.nonzero(m)
                ka, kb = A[ii, jj], B[ii, jj]
                lo, hi = np.minimum(ka, kb), np.maximum(ka, kb)
                keys = lo.astype(np.int64) * (n + 1) + hi
                order = np.argsort(keys, kind="stable")
                keys = keys[order]
                starts = np.r_[0, np.nonzero(np.diff(keys))[0] + 1]
                ends = np.r_[starts[1:], len(keys)]
                for s0, e0 in zip(starts, ends):
                    key = int(keys[s0])
                    lst = cand.setdefault(key, [])
                    if len(lst) >= per_pair:
                        continue
                    take = order[np.linspace(s0, e0 - 1, min(4, e0 - s0)).astype(int)]
                    bj = jj[take] + max(0, -b)
                    for i0, j0 in zip(ii[take], bj):
                        lst.append((i0, j0, i0 + a, j0 + b))
        if not cand:
            return lab
        keys = []
        segs = []
        for key, lst in cand.items():
            for s_ in lst:
                keys.append(key)
                segs.append(s_)
        segs = np.asarray(segs, dtype=float)
        p = np.column_stack([gr["x0"] + (segs[:, 0] + 0.5) * gr["cell"],
                             gr["y0"] + (segs[:, 1] + 0.5) * gr["cell"]])
        q = np.column_stack([gr["x0"] + (segs[:, 2] + 0.5) * gr["cell"],
                             gr["y0"] + (segs[:, 3] + 0.5) * gr["cell"]])
        clear = ~np.isfinite(self.cast(p, q))
        parent = list(range(n + 1))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for key, ok in zip(keys, clear):
            if ok:
                u, v = find(key // (n + 1)), find(key % (n + 1))
                if u != v:
                    parent[max(u, v)] = min(u, v)
        roots = np.array([find(k) for k in range(n + 1)])
        uniq = np.unique(roots[1:])
        remap = np.zeros(n + 1, dtype=lab.dtype)
        remap[1:] = np.searchsorted(uniq, roots[1:]) + 1
        return remap[lab]

    def _cell_index(self, pts):
        gr = self._grid
        i = np.clip(np.floor((pts[:, 0] - gr["x0"]) / gr["cell"]).astype(int), 0, gr["N"] - 1)
        j = np.clip(np.floor((pts[:, 1] - gr["y0"]) / gr["cell"]).astype(int), 0, gr["N"] - 1)
        return i, j

    def _fallback_ids(self, pts, rings=64):
        """Component ids (0-based, -1 unknown) for points in blocked cells.

        Labeled cells are tried nearest first; the first one reachable by a
        clear segment names the component.
        """
        gr = self._grid
        lab = self._cell_label
        N = gr["N"]
        out = np.full(len(pts), -1)
        I, J = self._cell_index(pts)
        todo = np.arange(len(pts))
        for a, b in _ring_offsets(rings):
            if len(todo) == 0:
                break
            ii = I[todo] + a
            jj = J[todo] + b
            ok = (ii >= 0) & (ii < N) & (jj >= 0) & (jj < N)
            ok[ok] = lab[ii[ok], jj[ok]] > 0
            if not ok.any():
                continue
            k = todo[ok]
            cc = np.column_stack([gr["x0"] + (ii[ok] + 0.5) * gr["cell"],
                                  gr["y0"] + (jj[ok] + 0.5) * gr["cell"]])
            clear = ~np.isfinite(self.cast(pts[k], cc))
            out[k[clear]] = lab[ii[ok][clear], jj[ok][clear]] - 1
            todo = todo[out[todo] < 0]
        return out

    # ---- geometry queries

    def _distance_lower(self, pts, cap=np.inf):
        d = np.full(len(pts), cap)
        for p in self.primitives:
            f = getattr(p, "distance_lower", None)
            d = np.minimum(d, f(pts, cap) if f else p.nearest(pts)[0])
        return d

    def nearest(self, points):
        """Distance to Sigma and a nearest point of Sigma, per row."""
        pts = np.atleast_2d(np.asarray(points, float))
        best_d = np.full(len(pts), np.inf)
        best_p = np.zeros_like(pts)
        for p in self.primitives:
            d, near = p.nearest(pts)
            better = d < best_d
            best_d = np.where(better, d, best_d)
            best_p = np.where(better[:, None], near, best_p)
        return best_d, best_p

    def distance(self, points):
        return self.nearest(points)[0]

    def check_window(self, points, slack=1e-9):
        pts = np.atleast_2d(np.asarray(points, float))
        out = np.linalg.norm(pts - self.window.center, axis=1) > self.window.radius * (1 + slack)
        if out.any():
            raise OutOfWindow(f"point {pts[np.argmax(out)].tolist()} outside the scene window")

    def component_ids(self, points, eps=None, check=True):
        """-1 for boundary, else index into :attr:`labels` (-2 unresolved)."""
        pts = np.atleast_2d(np.asarray(points, float))
        if check:
            self.check_window(pts)
        eps = self.eps if eps is None else eps
        d = self.distance(pts)
        out = np.full(len(pts), -1)
        off = d > eps
        if not off.any():
            return out
        q = pts[off]
        if self.labeling == "analytic":
            out[off] = self.primitives[0].side(q)
            return out
        i, j = self._cell_index(q)
        ids = self._cell_label[i, j] - 1
        blocked = np.nonzero(ids < 0)[0]
        if len(blocked):
            fb = self._fallback_ids(q[blocked])
            ids[blocked] = np.where(fb >= 0, fb, -2)
        out[off] = ids
        return out

    def classify(self, p, eps=None):
        """``BOUNDARY`` if within eps of Sigma, else the component label."""
        k = int(self.component_ids(np.asarray(p, float)[None], eps)[0])
        if k == -1:
            return BOUNDARY
        if k == -2:
            return "unresolved"
        return self.labels[k]

    def label_id(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidInput(f"label {label!r} not in scene (labels: {self.labels})") from None

    def cast(self, p, q, open_start=False, open_end=False):
        """Batched first hit: parameter t in [0, 1] along p->q, inf when clear."""
        p = np.atleast_2d(np.asarray(p, float))
        q = np.atleast_2d(np.asarray(q, float))
        L = np.linalg.norm(q - p, axis=1)
        safe = np.where(L > 0, L, 1.0)
        tmin = np.where(open_start, self.eps_open / safe, 0.0) * np.ones(len(p))
        best = np.full(len(p), np.inf)
        for prim in self.primitives:
            best = np.minimum(best, prim.hits(p, q, tmin, self.eps))
        if open_end:
            best = np.where(best > 1.0 - self.eps_open / safe, np.inf, best)
        return best

    def first_hit(self, s: Segment):
        """Nearest Sigma point of the segment to ``s.a`` as ``(point, dist)``, or None."""
        t = float(self.cast(s.a[None], s.b[None], s.open_a, s.open_b)[0])
        if not math.isfinite(t):
            return None
        return s.a + t * (s.b - s.a), t * s.length

    def sample_boundary(self, ball, resolution, region=None):
        """Weighted sample of Sigma inside ``ball`` (optionally filtered by ``region``)."""
        pts, ws = [], []
        for p in self.primitives:
            a, w = p.sample(ball, resolution)
            pts.append(a)
            ws.append(w)
        pts = np.vstack(pts) if pts else np.zeros((0, self.dimension))
        ws = np.concatenate(ws) if ws else np.zeros(0)
        keep = ball.contains(pts) & (np.linalg.norm(pts - self.window.center, axis=1)
                                     <= self.window.radius)
        if region is not None and len(pts):
            keep &= region(pts)
        return BoundarySample(pts[keep], ws[keep], float(resolution))

    def boundary_measure(self, ball, resolution):
        """H^d(ball & Sigma) estimated by the weights of a boundary sample."""
        if resolution > ball.radius / 10 * (1 + 1e-12):
            raise InvalidInput("resolution must be at most radius/10")
        return self.sample_boundary(ball, resolution).total

    @property
    def d(self):
        return self.dimension - 1

    @property
    def diameter(self):
        return 2 * self.window.radius

    # ---- transforms & serialization

    def transformed(self, R, t):
        """Image of the scene under x -> R x + t."""
        R = np.asarray(R, float)
        t = np.asarray(t, float)
        return Scene([p.transformed(R, t) for p in self.primitives],
                     Ball(R @ self.window.center + t, self.window.radius),
                     {k: R @ v + t for k, v in self.seeds.items()}, None, self.resolution,
                     self.flood_cells)

    def to_dict(self):
        return {
            "dimension": self.dimension,
            "window": self.window.to_dict(),
            "primitives": [p.to_dict() for p in self.primitives],
            "seeds": {k: v.tolist() for k, v in self.seeds.items()},
            "catalog": self.catalog,
            "resolution": self.resolution,
            "flood_cells": self.flood_cells,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d):
        cat = d.get("catalog")
        if cat:
            return make_scene(cat["name"], **cat.get("params", {}))
        if "primitives" not in d or "window" not in d:
            raise InvalidInput("scene JSON needs 'window' and 'primitives'")
        return cls([primitive_from_dict(p) for p in d["primitives"]],
                   Ball.from_dict(d["window"]), d.get("seeds"), None,
                   float(d.get("resolution", 0.0)), int(d.get("flood_cells", 1024)))

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def __repr__(self):
        name = self.catalog["name"] if self.catalog else "custom"
        return f"Scene({name}, {len(self.primitives)} primitives, labels={self.labels})"


# --------------------------------------------------------------------------
# catalog


def _koch_vertices(depth, radius=1.0):
    ang = math.pi / 2 - np.arange(3) * 2 * math.pi / 3
    tri = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    pts = tri
    for _ in range(depth):
        a = pts
        b = np.roll(pts, -1, axis=0)
        d = (b - a) / 3
        # clockwise triangle: the outward normal of edge d is (-d_y, d_x) rotated
        rot = np.array([[0.5, math.sqrt(3) / 2], [-math.sqrt(3) / 2, 0.5]])
        p1 = a + d
        p3 = a + 2 * d
        p2 = p1 + d @ rot
        new = np.empty((4 * len(a), 2))
        new[0::4] = a
        new[1::4] = p1
        new[2::4] = p2
        new[3::4] = p3
        pts = new
    return pts


def _cantor_squares(depth, side=1.0):
    lo = np.array([[-side / 2, -side / 2]])
    s = side
    for _ in range(depth):
        s4 = s / 4
        offs = np.array([[0, 0], [3 * s4, 0], [0, 3 * s4], [3 * s4, 3 * s4]])
        lo = (lo[:, None, :] + offs[None]).reshape(-1, 2)
        s = s4
    sq = np.array([[0, 0], [s, 0], [s, s], [0, s]])
    return [l + sq for l in lo], s


CATALOG = ("halfplane", "disk", "annulus", "polygon", "lipschitz_graph", "parabola_cusp",
           "koch_snowflake", "four_corner_cantor", "slab", "nested_squares",
           "punctured_line", "halfplane_with_ball")


def _freeze(v):
    if isinstance(v, (list, tuple)):
        return tuple(_freeze(x) for x in v)
    return v


def make_scene(name, **params):
    """Build a catalog scene; fractal depths above 12 are rejected."""
    frozen = tuple(sorted((k, _freeze(v)) for k, v in params.items()))
    return _make_scene_cached(name, frozen)


@functools.lru_cache(maxsize=64)
def _make_scene_cached(name, frozen):
    params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in frozen}
    scene = _build(name, dict(params))
    scene.catalog = {"name": name, "params": params}
    return scene


def _build(name, p):
    if name not in CATALOG:
        raise InvalidInput(f"unknown catalog scene {name!r}; choose from {CATALOG}")
    depth = p.get("depth")
    if depth is not None and not (0 <= int(depth) <= MAX_DEPTH):
        raise InvalidInput(f"depth {depth} outside [0, {MAX_DEPTH}] (memory guard)")
    if name == "halfplane":
        D = int(p.get("dimension", 2))
        off = float(p.get("offset", 0.0))
        n = np.eye(D)[-1]
        return Scene([HalfSpace(n, off)], Ball(np.zeros(D), float(p.get("window", 2.0))))
    if name == "disk":
        D = int(p.get("dimension", 2))
        return Scene([Sphere(np.zeros(D), float(p.get("radius", 1.0)))],
                     Ball(np.zeros(D), float(p.get("window", 3.0))))
    if name == "annulus":
        ri, ro = float(p.get("inner", 0.5)), float(p.get("outer", 1.0))
        W = float(p.get("window", 2.0))
        return Scene([Sphere(np.zeros(2), ri), Sphere(np.zeros(2), ro)], Ball(np.zeros(2), W),
                     {"hole": [0.0, 0.0], "ring": [(ri + ro) / 2, 0.0], "outside": [0.9 * W, 0.0]})
    if name == "polygon":
        verts = p.get("vertices") or [[-1, -1], [1, -1], [1, 1], [-1, 1]]
        return Scene([Polyline(verts, closed=True)], Ball(np.zeros(2), float(p.get("window", 3.0))))
    if name == "lipschitz_graph":
        W = float(p.get("window", 2.0))
        A, k = float(p.get("amplitude", 0.2)), float(p.get("frequency", 3.0))
        xs = np.linspace(-1.1 * W, 1.1 * W, int(p.get("samples", 4001)))
        return Scene([Graph(xs, A * np.sin(k * xs))], Ball(np.zeros(2), W))
    if name == "parabola_cusp":
        W = float(p.get("window", 2.0))
        X = math.sqrt(1.2 * W)
        xs = np.linspace(-X, X, int(p.get("samples", 6001)))
        return Scene([Graph(xs, xs ** 2, ("top", "under_top")),
                      Graph(xs, -xs ** 2, ("over_bottom", "bottom"))],
                     Ball(np.zeros(2), W),
                     {"top": [0.0, 0.5 * W], "bottom": [0.0, -0.5 * W],
                      "cusp_right": [1.0, 0.0], "cusp_left": [-1.0, 0.0]},
                     resolution=float(2 * X / (int(p.get("samples", 6001)) - 1)))
    if name == "koch_snowflake":
        depth = int(p.get("depth", 4))
        W = float(p.get("window", 2.0))
        v = _koch_vertices(depth)
        edge = float(np.linalg.norm(v[1] - v[0]))
        return Scene([Polyline(v, closed=True)], Ball(np.zeros(2), W),
                     {"inside": [0.0, 0.0], "outside": [0.9 * W, 0.0]}, resolution=edge)
    if name == "four_corner_cantor":
        depth = int(p.get("depth", 4))
        squares, s = _cantor_squares(depth)
        return Scene([SolidPolygons(squares)], Ball(np.zeros(2), float(p.get("window", 1.0))),
                     {"outside": [0.9, 0.0]}, resolution=s)
    if name == "slab":
        lo, hi = float(p.get("lower", -0.25)), float(p.get("upper", 0.25))
        W = float(p.get("window", 2.0))
        return Scene([HalfSpace([0, 1], hi), HalfSpace([0, 1], lo)], Ball(np.zeros(2), W),
                     {"above": [0.0, (hi + W) / 2], "between": [0.0, (lo + hi) / 2],
                      "below": [0.0, (lo - W) / 2]})
    if name == "nested_squares":
        o, i = float(p.get("outer", 1.0)), float(p.get("inner", 0.5))
        sq = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], float)
        W = float(p.get("window", 2.0))
        return Scene([Polyline(o * sq, True), Polyline(i * sq, True)], Ball(np.zeros(2), W),
                     {"core": [0.0, 0.0], "between": [(o + i) / 2, 0.0],
                      "outside": [0.0, (o + W) / 2]})
    if name == "punctured_line":
        off, gap = float(p.get("offset", 0.3)), float(p.get("gap", 0.3))
        W = float(p.get("window", 2.0))
        L = 1.1 * W
        return Scene([Polyline([[-L, off], [-gap, off]]), Polyline([[gap, off], [L, off]])],
                     Ball(np.zeros(2), W))
    if name == "halfplane_with_ball":
        c = p.get("center", [0.0, 0.5])
        rad = float(p.get("radius", 0.1))
        W = float(p.get("window", 2.0))
        return Scene([HalfSpace([0, 1], 0.0), Sphere(np.asarray(c, float), rad)],
                     Ball(np.zeros(2), W),
                     {"upper": [0.0, 0.9 * W], "lower": [0.0, -0.5 * W], "ball": list(c)})
    raise InvalidInput(name)  # pragma: no cover


def write_corpus(directory, entries=None):
    """Write catalog scenes as JSON fixtures; returns the written paths."""
    import os

    entries = entries or [
        ("halfplane", {}), ("disk", {}), ("annulus", {}), ("polygon", {}),
        ("lipschitz_graph", {}), ("parabola_cusp", {}), ("koch_snowflake", {"depth": 6}),
        ("four_corner_cantor", {"depth": 4}), ("slab", {}), ("nested_squares", {}),
    ]
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, params in entries:
        tag = name + "".join(f"_{k}{v}" for k, v in sorted(params.items()))
        path = os.path.join(directory, tag + ".json")
        with open(path, "w") as fh:
            json.dump({"catalog": {"name": name, "params": params},
                       **make_scene(name, **params).to_dict()}, fh)
        paths.append(path)
    return paths
