"""Direction grids on spherical caps and the visibility relation.

A cap B(theta0, delta) of S^d is charted by orthogonal projection onto its
tangent plane, identified with Q0 = [-delta, delta]^d.  Grid nodes are the
lifts of the n^d cell centers of Q0; each node weighs the cap measure of its
cell's lift (clipped to the cap), so node weights integrate over the cap.

The visibility relation pairs a node theta with a boundary sample xi when the
open segment from the foot pi_theta(xi) on the plane L_theta = {x . theta = 0}
to xi misses Sigma.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisViolated, InvalidInput
from .geometry import Hull, ball_volume, cap_area, geodesic, tangent_frame, unit
from .scene import Ball, BoundarySample, Scene

DELTA0 = 0.2


class DirectionGrid:
    """Uniform chart grid on the cap B(theta0, delta)."""

    def __init__(self, theta0, delta, n):
        self.theta0 = unit(theta0)
        self.D = len(self.theta0)
        self.d = self.D - 1
        self.delta = float(delta)
        self.n = int(n)
        self.frame = tangent_frame(self.theta0)
        h = 2 * self.delta / self.n
        g = -self.delta + h * (np.arange(self.n) + 0.5)
        if self.d == 1:
            self.coords = g[:, None]
        else:
            U, V = np.meshgrid(g, g, indexing="ij")
            self.coords = np.column_stack([U.ravel(), V.ravel()])
        self.nodes = self.lift(self.coords)
        self.weights = self._cap_weights()

    @property
    def spacing(self):
        return 2 * self.delta / self.n

    @property
    def cap_measure(self):
        return cap_area(self.d, self.delta)

    @property
    def shape(self):
        return (self.n,) * self.d

    def __len__(self):
        return len(self.nodes)

    def chart(self, dirs):
        """Orthogonal projection of directions onto the tangent chart."""
        return np.atleast_2d(dirs) @ self.frame.T

    def lift(self, y):
        y = np.atleast_2d(np.asarray(y, float))
        s = np.sum(y * y, axis=1)
        if np.any(s > 1):
            raise InvalidInput("chart point outside the unit ball")
        return y @ self.frame + np.sqrt(1 - s)[:, None] * self.theta0

    def _cap_weights(self):
        sd = math.sin(self.delta)
        h = self.spacing
        if self.d == 1:
            y0 = np.clip(self.coords[:, 0] - h / 2, -sd, sd)
            y1 = np.clip(self.coords[:, 0] + h / 2, -sd, sd)
            return np.arcsin(y1) - np.arcsin(y0)
        q = 16
        sub = (np.arange(q) + 0.5) / q - 0.5
        SU, SV = np.meshgrid(sub * h, sub * h, indexing="ij")
        offs = np.column_stack([SU.ravel(), SV.ravel()])
        w = np.empty(len(self.coords))
        for s in range(0, len(self.coords), 4096):
            Y = self.coords[s:s + 4096, None, :] + offs[None]
            r2 = np.sum(Y * Y, axis=2)
            jac = np.where(r2 <= sd * sd, 1 / np.sqrt(np.maximum(1 - r2, 1e-300)), 0.0)
            w[s:s + 4096] = jac.mean(axis=1) * h * h
        return w

    def index_of(self, y):
        """Grid cell multi-index (clipped) holding chart points y."""
        k = np.floor((np.atleast_2d(y) + self.delta) / self.spacing).astype(int)
        return np.clip(k, 0, self.n - 1)

    def flat(self, multi):
        multi = np.atleast_2d(multi)
        if self.d == 1:
            return multi[:, 0]
        return multi[:, 0] * self.n + multi[:, 1]

    def to_dict(self):
        return {"theta0": self.theta0.tolist(), "delta": self.delta, "n": self.n}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["theta0"], float), float(d["delta"]), int(d["n"]))


def chart_distortion(d, delta, samples=4000, seed=0):
    """Empirical bi-Lipschitz constant of the projection chart on B(delta)."""
    rng = np.random.default_rng(seed)
    theta0 = np.eye(d + 1)[-1]
    frame = tangent_frame(theta0)
    sd = math.sin(delta)
    y = rng.uniform(-sd, sd, size=(samples, d))
    y = y[np.linalg.norm(y, axis=1) <= sd]
    dirs = y @ frame + np.sqrt(1 - np.sum(y * y, axis=1))[:, None] * theta0
    i = rng.integers(0, len(y), size=samples)
    j = rng.integers(0, len(y), size=samples)
    ok = i != j
    flat = np.linalg.norm(y[i[ok]] - y[j[ok]], axis=1)
    arc = geodesic(dirs[i[ok]], dirs[j[ok]])
    good = flat > 1e-12
    ratio = arc[good] / flat[good]
    return float(max(ratio.max(), 1 / ratio.min()))


def chart_selftest(delta0=DELTA0):
    """Chart distortion at delta0 in both dimensions stays below 2."""
    worst = max(chart_distortion(1, delta0), chart_distortion(2, delta0))
    if worst > 2:
        raise RuntimeError(f"chart distortion {worst} exceeds 2 at delta0={delta0}")
    return worst


def build_grid(theta0, delta, n, delta0=DELTA0) -> DirectionGrid:
    if not (0 < delta < delta0):
        raise InvalidInput(f"cap radius delta={delta} must lie in (0, {delta0})")
    if n < 8:
        raise InvalidInput("grid needs n >= 8 subdivisions per axis")
    return DirectionGrid(theta0, delta, n)


# --------------------------------------------------------------------------
# fibers and the visibility table


def feet(thetas, xi):
    """pi_theta(xi) for all pairs: array (len(thetas), len(xi), D)."""
    th = np.atleast_2d(thetas)
    xi = np.atleast_2d(xi)
    h = xi @ th.T  # (m, k)
    return xi[None, :, :] - h.T[:, :, None] * th[:, None, :]


def _fiber_span(scene, region):
    return 2.2 * scene.window.radius if region is None else 2.2 * region.bounding[1]


def fiber_gaps(scene: Scene, theta, xi, region: Hull | None = None):
    """Vectorized h(theta, xi) over rows (theta broadcast against xi)."""
    xi = np.atleast_2d(np.asarray(xi, float))
    th = np.broadcast_to(np.atleast_2d(np.asarray(theta, float)), xi.shape)
    best = np.full(len(xi), np.inf)
    span = _fiber_span(scene, region)
    for sign in (1.0, -1.0):
        u = sign * th
        if region is None:
            # exit of the window ball
            c = xi - scene.window.center
            b = np.sum(c * u, axis=1)
            disc = b * b - (np.sum(c * c, axis=1) - scene.window.radius ** 2)
            L = -b + np.sqrt(np.maximum(disc, 0.0))
        else:
            _, L = region.chord(xi, u, span)
        L = np.maximum(L, 0.0)
        ok = L > 0
        if not ok.any():
            continue
        t = np.full(len(xi), np.inf)
        t[ok] = scene.cast(xi[ok], xi[ok] + L[ok, None] * u[ok], open_start=True)
        best = np.minimum(best, np.where(np.isfinite(t), t * L, np.inf))
    return best


def fiber_gap(scene: Scene, S: BoundarySample | None, theta, xi, region: Hull | None = None):
    """Distance along the fiber through xi to the nearest other point of Sigma (inf if none)."""
    return float(fiber_gaps(scene, theta, xi, region)[0])


@dataclass
class VisibilityTable:
    grid: DirectionGrid
    boundary: BoundarySample
    bits: np.ndarray  # (nodes, samples) bool
    gaps: np.ndarray | None = None
    lengths: np.ndarray | None = None  # |xi - pi_theta(xi)|
    meta: dict = field(default_factory=dict)

    @property
    def theta_weights(self):
        return self.grid.weights

    @property
    def xi_weights(self):
        return self.boundary.weights

    def visible_weight(self, mask=None):
        """|theta(xi)| per sample (weighted count of visible nodes)."""
        b = self.bits if mask is None else (self.bits & mask)
        return self.grid.weights @ b

    def S_of(self, k, t=None):
        """Samples visible from node k, or S_t(theta) when t is given."""
        if t is None:
            return np.nonzero(self.bits[k])[0]
        return np.nonzero(t < self.gaps[k])[0]

    def theta_of(self, j, t=None):
        if t is None:
            return np.nonzero(self.bits[:, j])[0]
        return np.nonzero(t < self.gaps[:, j])[0]

    def theta_t_weight(self, t):
        """|theta_t(xi)| per sample."""
        return self.grid.weights @ (t < self.gaps)

    def E_ts(self, t, s):
        """Indices of E_{t,s} = {xi : |theta_t(xi)| > s}."""
        return np.nonzero(self.theta_t_weight(t) > s)[0]

    def to_dict(self):
        def pack(a):
            return {"shape": list(a.shape),
                    "data": base64.b64encode(np.packbits(a.astype(bool)).tobytes()).decode()}

        out = {"grid": self.grid.to_dict(), "boundary": self.boundary.to_dict(),
               "bits": pack(self.bits), "meta": self.meta,
               "theta_weights": self.grid.weights.tolist()}
        if self.gaps is not None:
            out["gaps"] = [[(g if math.isfinite(g) else None) for g in row]
                           for row in self.gaps.tolist()]
        if self.lengths is not None:
            out["lengths"] = self.lengths.tolist()
        return out

    @classmethod
    def from_dict(cls, d):
        grid = DirectionGrid.from_dict(d["grid"])
        S = BoundarySample.from_dict(d["boundary"])
        shp = tuple(d["bits"]["shape"])
        raw = np.frombuffer(base64.b64decode(d["bits"]["data"]), dtype=np.uint8)
        bits = np.unpackbits(raw)[: int(np.prod(shp))].reshape(shp).astype(bool)
        gaps = None
        if d.get("gaps") is not None:
            gaps = np.array([[np.inf if g is None else g for g in row] for row in d["gaps"]],
                            dtype=float).reshape(shp)
        lengths = np.asarray(d["lengths"], float).reshape(shp) if d.get("lengths") else None
        return cls(grid, S, bits, gaps, lengths, d.get("meta", {}))


def visible_table(scene: Scene, S: BoundarySample, grid: DirectionGrid, gaps=False,
                  region: Hull | None = None, chunk=200_000) -> VisibilityTable:
    """bits[k, j] iff the open segment (pi_theta_k(xi_j), xi_j) misses Sigma."""
    k_n, m = len(grid), len(S)
    bits = np.zeros((k_n, m), dtype=bool)
    lengths = np.zeros((k_n, m))
    G = np.full((k_n, m), np.inf) if gaps else None
    rows = max(1, chunk // max(m, 1))
    for s0 in range(0, k_n, rows):
        th = grid.nodes[s0:s0 + rows]
        F = feet(th, S.points)  # (r, m, D)
        P = F.reshape(-1, grid.D)
        Q = np.repeat(S.points[None], len(th), axis=0).reshape(-1, grid.D)
        L = np.linalg.norm(Q - P, axis=1)
        t = np.full(len(P), np.inf)
        pos = L > 0
        t[pos] = scene.cast(P[pos], Q[pos], open_start=True, open_end=True)
        bits[s0:s0 + rows] = (~np.isfinite(t)).reshape(len(th), m)
        lengths[s0:s0 + rows] = L.reshape(len(th), m)
        if gaps:
            T = np.repeat(th[:, None, :], m, axis=1).reshape(-1, grid.D)
            G[s0:s0 + rows] = fiber_gaps(scene, T, Q, region).reshape(len(th), m)
    return VisibilityTable(grid, S, bits, G, lengths, {"open_segments": True})


def kappa_value(d, C, M):
    """kappa = w_d / (2^{d+1} C^d M)."""
    return ball_volume(d) / (2 ** (d + 1) * C ** d * M)


def select_kappa_set(table: VisibilityTable, kappa, mask=None):
    """E_kappa: samples seeing at least kappa |B(delta)| of the cap; (sample, indices)."""
    if not (0 < kappa <= 1):
        raise InvalidInput("kappa must lie in (0, 1]")
    vis = table.visible_weight(mask)
    idx = np.nonzero(vis >= kappa * table.grid.cap_measure * (1 - 1e-12))[0]
    return table.boundary.subset(idx), idx


def fubini_check(table: VisibilityTable):
    """Both orders of the double sum over the relation; equal up to reassociation."""
    wt = np.asarray(table.theta_weights, float)
    wx = np.asarray(table.xi_weights, float)
    b = np.asarray(table.bits, dtype=float)
    lhs = math.fsum(wt * (b @ wx)) if b.size else 0.0
    rhs = math.fsum(wx * (wt @ b)) if b.size else 0.0
    return lhs, rhs


# --------------------------------------------------------------------------
# projection surjectivity


def delta1(C, a, r):
    """Largest rotation angle keeping B(a e, r/2C) inside B(a e, r/C)."""
    return 2 * math.asin(min(1.0, r / (4 * C * a)))


def disk_lattice(theta, radius, n):
    """Lattice on D_theta = B(0, radius) & L_theta, one cell away from its rim."""
    frame = tangent_frame(theta)
    d = len(frame)
    if d == 1:
        h = 2 * radius / (n + 1)
        y = (-radius + h * (np.arange(n) + 1))[:, None]
    else:
        k = int(round(math.sqrt(n)))
        h = 2 * radius / (k + 1)
        g = -radius + h * (np.arange(k) + 1)
        U, V = np.meshgrid(g, g, indexing="ij")
        y = np.column_stack([U.ravel(), V.ravel()])
        y = y[np.linalg.norm(y, axis=1) <= radius - h]
    return y @ frame


@dataclass
class SurjectivityReport:
    holds: bool
    hull: Hull
    sample: BoundarySample
    D_radius: float
    checked: int
    failures: list
    hypothesis: dict

    def to_dict(self):
        return {"holds": self.holds, "hull": self.hull.to_dict(), "D_radius": self.D_radius,
                "fibers_checked": self.checked, "samples": len(self.sample),
                "failures": [{"theta": np.asarray(t).tolist(), "x": np.asarray(x).tolist()}
                             for t, x in self.failures[:32]],
                "failure_count": len(self.failures), "hypothesis": self.hypothesis}


def lemma_hull(r, C, a, D):
    e = np.eye(D)[-1]
    return Hull(np.zeros(D), r / (2 * C), a * e, r / C)


def project_surjective(scene: Scene, B: Ball, C, a, grid: DirectionGrid, lattice=64,
                       resolution=None, strict=True) -> SurjectivityReport:
    """Check that every fiber through the lattice on D_theta meets S = T & Sigma.

    The scene must already be normalized: the small ball at the origin and the
    big ball at a e_{d+1}.  The two balls must lie in different components;
    otherwise HypothesisViolated is raised (or, with ``strict=False``, the
    check still runs and the outcome is reported).
    """
    r = B.radius
    D = scene.dimension
    T = lemma_hull(r, C, a, D)
    small = Ball(np.zeros(D), r / (2 * C))
    big = Ball(a * np.eye(D)[-1], r / C)
    lab = [scene.classify(b.center) for b in (small, big)]
    clear = [float(scene.distance(b.center[None])[0]) > b.radius for b in (small, big)]
    hyp = {"labels": lab, "balls_clear": clear, "delta": grid.delta,
           "delta1": delta1(C, a, r)}
    same = lab[0] == lab[1]
    if (same or not all(clear)) and strict:
        raise HypothesisViolated("the two witness balls are not in different components "
                                 f"of the complement (labels {lab}, clear {clear})",
                                 stage="project_surjective", witness=hyp)
    if grid.delta >= hyp["delta1"]:
        raise InvalidInput(f"delta={grid.delta} not below delta1={hyp['delta1']:.4g}")
    c, rad = T.bounding
    res = resolution or r / 2000
    S = scene.sample_boundary(Ball(c, rad), res, region=lambda p: T.contains(p, 1e-12))
    span = 2.2 * rad
    failures = []
    checked = 0
    for theta in grid.nodes:
        x = disk_lattice(theta, r / (2 * C), lattice)
        s0, s1 = T.chord(x, theta, span)
        p = x + s0[:, None] * theta
        q = x + s1[:, None] * theta
        t = scene.cast(p, q)
        checked += len(x)
        for k in np.nonzero(~np.isfinite(t))[0]:
            failures.append((theta, x[k]))
    hyp["same_component"] = same
    return SurjectivityReport(not failures, T, S, r / (2 * C), checked, failures,
                              hyp)
