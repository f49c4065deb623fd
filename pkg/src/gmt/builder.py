"""Lipschitz subdomains with large boundary overlap.

Pipeline, in the normalized frame (interior ball at the origin, exterior
corkscrew ball on the positive last axis, direction cap around -e_{d+1}):

  visibility of S = T & Sigma  ->  E_kappa  ->  dense cap per xi (porosity)
  ->  cone checks  ->  sphere/boundary nets  ->  cell (i*, j*)
  ->  Omega_ij = (union of cones over E_ij) & hull(B_j, B_j')  ->  overlap.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .conditions import _search, check_corkscrew
from .cones import Cone, cone_contains, verify_cone
from .errors import GMTError, HypothesisViolated, InvalidInput, ResolutionError
from .geometry import Hull, ball_volume, geodesic, rotation_taking, tangent_frame, unit
from .porosity import find_dense_cap
from .scene import Ball, BoundarySample, Scene
from .visibility import DELTA0, DirectionGrid, build_grid, delta1, feet, kappa_value, lemma_hull

UPSILON = 0.24
ETA_FRACTION = 0.9
DELTA_CAP = 0.15


@dataclass
class ConstantLedger:
    C: float
    M: float
    rho: float
    delta: float
    eta: float
    upsilon: float
    kappa: float
    c0: float
    t: float
    tau: float
    L: float
    a: float
    r: float
    d: int
    n1: int = 0
    n2: int = 0

    @classmethod
    def derive(cls, C, M, r, a, d, c0=1.0, rho=1.0, delta=None, upsilon=UPSILON, eta=None):
        if eta is None:
            eta = ETA_FRACTION * upsilon / (4 * C)
        if delta is None:
            delta = min(DELTA_CAP, 0.9 * delta1(C, a, r))
        t = r / (2 * C)
        half = upsilon * c0 * delta / 2
        return cls(C=C, M=M, rho=rho, delta=delta, eta=eta, upsilon=upsilon,
                   kappa=kappa_value(d, C, M), c0=c0, t=t, tau=t / 4 * math.sin(half),
                   L=1 / math.cos(half), a=a, r=r, d=d)

    def with_c0(self, c0):
        half = self.upsilon * c0 * self.delta / 2
        return ConstantLedger(**{**asdict(self), "c0": c0, "tau": self.t / 4 * math.sin(half),
                                 "L": 1 / math.cos(half)})

    @property
    def half_angle(self):
        return self.upsilon * self.c0 * self.delta / 2

    def violations(self):
        out = []
        C = self.C
        if not (0 < 4 * C * self.eta < self.upsilon < 0.25):
            out.append(f"need 0 < 4C eta < upsilon < 1/4, got 4C eta = {4 * C * self.eta:.4g}, "
                       f"upsilon = {self.upsilon}")
        k = kappa_value(self.d, C, self.M)
        if not math.isclose(self.kappa, k, rel_tol=1e-12):
            out.append(f"kappa {self.kappa} != w_d/(2^(d+1) C^d M) = {k}")
        checks = [("t", self.t, self.r / (2 * C)),
                  ("tau", self.tau, self.t / 4 * math.sin(self.half_angle)),
                  ("L", self.L, 1 / math.cos(self.half_angle))]
        for name, got, want in checks:
            if not math.isclose(got, want, rel_tol=1e-12):
                out.append(f"{name} = {got} but the coupling gives {want}")
        q = self.a / self.r
        if not (2 / C * (1 - 1e-9) <= q <= (2 - 2 / C) * (1 + 1e-9)):
            out.append(f"a/r = {q:.4g} outside [2/C, 2 - 2/C]")
        if not (0 < self.delta < min(DELTA0, delta1(C, self.a, self.r))):
            out.append(f"delta {self.delta} not below min(delta0, delta1)")
        if not (0 < self.c0 <= 1):
            out.append(f"c0 = {self.c0} outside (0, 1]")
        return out

    def validate(self):
        bad = self.violations()
        if bad:
            raise InvalidInput("; ".join(bad))
        return self

    def to_dict(self):
        out = asdict(self)
        out["half_angle"] = self.half_angle
        out["w_d"] = ball_volume(self.d)
        return out


# --------------------------------------------------------------------------
# normalization


@dataclass
class Normalization:
    R: np.ndarray
    shift: np.ndarray
    a: float
    rho: float
    interior: Ball
    exterior: Ball
    label: str

    def forward(self, x):
        """Original coordinates -> normalized."""
        return (np.atleast_2d(x) - self.shift) @ self.R.T

    def backward(self, y):
        return np.atleast_2d(y) @ self.R + self.shift

    def to_dict(self):
        return {"R": self.R.tolist(), "shift": self.shift.tolist(), "a": self.a, "rho": self.rho,
                "interior": self.interior.to_dict(), "exterior": self.exterior.to_dict(),
                "label": self.label}


def choose_label(scene: Scene, B: Ball, C):
    """Component with an exterior corkscrew in B and the roomiest interior ball."""
    best = None
    for lab in scene.labels:
        try:
            v = check_corkscrew(scene, lab, B.center, B.radius, C, side="exterior", verify=False)
        except InvalidInput:
            continue
        if not v.holds:
            continue
        got = _search(scene, B.center, B.radius, C, "off", label=lab).get(lab)
        g = got[0] if got else 0.0
        if best is None or g > best[0] * (1 + 1e-9):
            best = (g, lab)
    if best is None:
        raise HypothesisViolated("no component has an exterior corkscrew in B",
                                 stage="normalize")
    return best[1]


def normalize(scene: Scene, B: Ball, C, label=None):
    """Rigid motion: interior ball to the origin, exterior witness onto +e_{d+1}.

    Returns (normalized scene, Normalization).  rho is read off the largest
    interior ball found, capped at 1.
    """
    if label is None:
        label = choose_label(scene, B, C)
    ext = check_corkscrew(scene, label, B.center, B.radius, C, side="exterior")
    if not ext.holds:
        raise HypothesisViolated(f"no exterior corkscrew ball for {label!r} in B",
                                 stage="normalize", witness=ext.to_dict())
    got = _search(scene, B.center, B.radius, C, "off", label=label).get(label)
    if not got or got[0] <= 0:
        raise HypothesisViolated(f"no interior ball of {label!r} in B", stage="normalize")
    g, zi = got
    rho = min(1.0, g * C / B.radius)
    zi = np.asarray(zi, float)
    ze = ext.witnesses[0].center
    D = scene.dimension
    e = np.eye(D)[-1]
    R = rotation_taking(unit(ze - zi), e)
    a = float(np.linalg.norm(ze - zi))
    norm = Normalization(R, zi, a, rho, Ball(np.zeros(D), rho * B.radius / C),
                         Ball(a * e, B.radius / C), label)
    if np.allclose(R, np.eye(D)) and np.allclose(zi, 0):
        return scene, norm
    return scene.transformed(R, -R @ zi), norm


# --------------------------------------------------------------------------
# nets


def sphere_net(theta0, radius, sep, seed=0, resolution=16):
    """Greedy maximal sep-separated directions in the cap B(theta0, radius).

    On S^1 the net is exact: theta0 rotated by k*sep.  On S^2 candidates are
    a chart grid (spacing sep/resolution) in greedy order of distance to the
    center; a candidate joins unless a node lies within sep - h of it, which
    keeps coverage within sep at the price of separation >= sep - h.
    """
    theta0 = unit(theta0)
    if sep <= 0:
        raise InvalidInput("net separation must be positive")
    frame = tangent_frame(theta0)
    if len(theta0) == 2:
        k = int(math.floor(radius / sep * (1 + 1e-12)))
        ang = sep * np.arange(-k, k + 1)
        order = np.argsort(np.abs(ang), kind="stable")
        ang = ang[order]
        return np.cos(ang)[:, None] * theta0 + np.sin(ang)[:, None] * frame[0]
    h = sep / resolution
    m = int(math.ceil(radius / h))
    g = h * np.arange(-m, m + 1)
    U, V = np.meshgrid(g, g, indexing="ij")
    y = np.column_stack([U.ravel(), V.ravel()])
    rr = np.linalg.norm(y, axis=1)
    y, rr = y[rr <= radius], rr[rr <= radius]
    # exponential chart: arclength rr from the center
    safe = np.where(rr > 0, rr, 1.0)
    dirs = (np.cos(rr)[:, None] * theta0
            + (np.sin(rr) / safe)[:, None] * (y @ frame))
    order = np.lexsort((y[:, 1], y[:, 0], rr))
    if seed:
        order = np.random.default_rng(seed).permutation(order)
    dirs = dirs[order]
    thr = 2 * math.sin((sep - h) / 2)
    tree = cKDTree(dirs)
    blocked = np.zeros(len(dirs), bool)
    keep = []
    k = 0
    while k < len(dirs):
        if not blocked[k]:
            keep.append(k)
            blocked[tree.query_ball_point(dirs[k], thr)] = True
        k += 1
        nxt = np.argmin(blocked[k:]) if k < len(dirs) else 0
        k += int(nxt)
    return dirs[keep]


def boundary_net(points, tau):
    """Greedy maximal tau-separated subset, scanning points in lexicographic order."""
    pts = np.atleast_2d(np.asarray(points, float))
    if len(pts) == 0:
        raise InvalidInput("boundary net of an empty set")
    if tau <= 0:
        raise InvalidInput("tau must be positive")
    order = np.lexsort(pts.T[::-1])
    thr = tau * (1 - 1e-12)
    keep = []
    tree = None
    pending = []
    for k in order:
        p = pts[k]
        if tree is not None and tree.query_ball_point(p, thr, return_length=True) > 0:
            continue
        if pending and np.min(np.linalg.norm(np.asarray(pending) - p, axis=1)) < thr:
            continue
        keep.append(k)
        pending.append(p)
        if len(pending) >= 256:
            tree = cKDTree(pts[keep])
            pending = []
    return pts[keep], np.asarray(keep)


@dataclass
class Partition:
    cell_i: np.ndarray
    cell_j: np.ndarray
    weights: dict
    best: tuple
    total: float
    n1: int
    n2: int
    max_angle: float
    max_offset: float

    @property
    def best_weight(self):
        return self.weights[self.best]

    @property
    def pigeonhole(self):
        return self.total / (self.n1 * self.n2)

    def members(self, cell=None):
        i, j = self.best if cell is None else cell
        return np.nonzero((self.cell_i == i) & (self.cell_j == j))[0]

    def to_dict(self):
        return {"best": list(self.best), "best_weight": self.best_weight, "total": self.total,
                "n1": self.n1, "n2": self.n2, "pigeonhole_bound": self.pigeonhole,
                "cells_used": len(self.weights), "max_angle": self.max_angle,
                "max_offset": self.max_offset}


def assign(points, dirs, xs, ys):
    """Nearest net direction (arclength) and nearest net point per sample."""
    _, i = cKDTree(xs).query(dirs, k=1)
    dist, j = cKDTree(ys).query(points, k=1)
    return np.asarray(i), np.asarray(j), geodesic(dirs, xs[i]), dist


def partition(E: BoundarySample, dirs, xs, ys) -> Partition:
    """E_ij by nearest assignment; the heaviest cell wins, ties to the smallest (i, j)."""
    if len(E) == 0:
        raise HypothesisViolated("E_kappa is empty", stage="partition")
    i, j, ang, off = assign(E.points, dirs, xs, ys)
    weights: dict = {}
    for a, b, w in zip(i.tolist(), j.tolist(), E.weights.tolist()):
        weights[(a, b)] = weights.get((a, b), 0.0) + w
    best = min(weights, key=lambda k: (-weights[k], k))
    return Partition(i, j, weights, best, float(E.weights.sum()), len(xs), len(ys),
                     float(ang.max()), float(off.max()))


# --------------------------------------------------------------------------
# the domain


def cone_distance(c: Cone, points):
    """Euclidean distance from points to the closed truncated cone."""
    v = np.atleast_2d(points) - c.apex
    n = np.linalg.norm(v, axis=1)
    h = v @ c.axis
    rad = np.sqrt(np.maximum(n * n - h * h, 0.0))
    phi = np.arctan2(rad, h)
    out = np.maximum(n - c.height, 0.0)  # inside the angular sector
    dev = phi - c.alpha
    side = (dev > 0) & (dev < math.pi / 2)
    s = n * np.cos(dev)
    lateral = np.where(s <= c.height, n * np.sin(dev),
                       np.sqrt(np.maximum(n * n + c.height ** 2 - 2 * n * c.height * np.cos(dev),
                                          0.0)))
    out = np.where(side, lateral, out)
    out = np.where(dev >= math.pi / 2, n, out)
    return out


@dataclass
class LipschitzDomainSpec:
    apexes: np.ndarray
    axis: np.ndarray
    alpha: float
    height: float
    hull: Hull
    i: int
    j: int
    L: float
    E: BoundarySample
    ball_j: Ball
    ball_j_shift: Ball

    def __post_init__(self):
        self._tree = cKDTree(self.apexes) if len(self.apexes) else None

    @property
    def cones(self):
        return [Cone(p, self.axis, self.alpha, self.height) for p in self.apexes]

    def in_cones(self, points, closed=False):
        """Point lies in some cone (open cones unless ``closed``)."""
        pts = np.atleast_2d(points)
        out = np.zeros(len(pts), bool)
        if self._tree is None:
            return out
        cosa = math.cos(self.alpha)
        near = self._tree.query_ball_point(pts, self.height)
        for k, idx in enumerate(near):
            if not idx:
                continue
            v = pts[k] - self.apexes[idx]
            n = np.linalg.norm(v, axis=1)
            a = v @ self.axis
            if closed:
                hit = (a >= n * cosa) & (n <= self.height)
            else:
                hit = (a > n * cosa) & (n < self.height)
            out[k] = bool(np.any(hit))
        return out

    def contains(self, points):
        """Membership in the open set (union of open cones) & interior of the hull."""
        pts = np.atleast_2d(points)
        return self.in_cones(pts) & self.hull.interior(pts)

    def closure_distance(self, points):
        """Upper bound on the distance to the closure (min over cones, hull gap folded in)."""
        pts = np.atleast_2d(points)
        best = np.full(len(pts), np.inf)
        if self._tree is None or len(pts) == 0:
            return best
        ptree = cKDTree(pts)
        for q, idx in enumerate(ptree.query_ball_point(self.apexes, 2 * self.height)):
            if not idx:
                continue
            c = Cone(self.apexes[q], self.axis, self.alpha, self.height)
            best[idx] = np.minimum(best[idx], cone_distance(c, pts[idx]))
        return np.maximum(best, np.maximum(self.hull.gap(pts), 0.0))

    def sample_members(self, n, seed=0):
        """Rejection sample of member points (deterministic)."""
        rng = np.random.default_rng(seed)
        c, rad = self.hull.bounding
        D = len(c)
        out = []
        tries = 0
        while sum(len(o) for o in out) < n and tries < 200:
            tries += 1
            g = rng.normal(size=(8 * n, D))
            g /= np.linalg.norm(g, axis=1)[:, None]
            p = c + g * (rad * rng.random(8 * n) ** (1 / D))[:, None]
            out.append(p[self.contains(p)])
        pts = np.vstack(out) if out else np.zeros((0, D))
        return pts[:n]

    def to_dict(self):
        return {"i": self.i, "j": self.j, "axis": self.axis.tolist(), "alpha": self.alpha,
                "height": self.height, "L": self.L, "hull": self.hull.to_dict(),
                "ball_j": self.ball_j.to_dict(), "ball_j_shift": self.ball_j_shift.to_dict(),
                "apexes": self.apexes.tolist(), "E_weight": self.E.total}


def build_domain(E: BoundarySample, x, y, ledger: ConstantLedger, i=0, j=0, certificates=None):
    """Omega_ij from the apex set, net direction x = x_i and net point y = y_j."""
    if certificates is not None:
        for cert in certificates:
            if not cert.contained:
                raise HypothesisViolated("cone over E_ij leaves Omega; construction aborted",
                                         stage="build_domain", witness=cert.to_dict())
    x = unit(x)
    y = np.asarray(y, float)
    Bj = Ball(y, ledger.tau)
    Bs = Ball(y + ledger.t / 4 * x, ledger.tau)
    hull = Hull(Bj.center, Bj.radius, Bs.center, Bs.radius)
    return LipschitzDomainSpec(np.asarray(E.points, float), x, ledger.half_angle, ledger.t / 2,
                               hull, i, j, ledger.L, E, Bj, Bs)


def shifted_ball_in_cone(spec: LipschitzDomainSpec, samples=256):
    """B_j' inside C_i(y_j): exact test via the axis angle and the height."""
    c = Cone(spec.ball_j.center, spec.axis, spec.alpha, spec.height)
    v = spec.ball_j_shift.center - c.apex
    n = float(np.linalg.norm(v))
    ang = math.acos(min(1.0, float(v @ c.axis) / n))
    rad = spec.ball_j_shift.radius
    fits_angle = n * math.sin(c.alpha - ang) >= rad * (1 - 1e-12) if ang < c.alpha else False
    fits_height = n + rad <= c.height * (1 + 1e-12)
    D = len(v)
    g = np.random.default_rng(0).normal(size=(samples, D))
    g /= np.linalg.norm(g, axis=1)[:, None]
    pts = spec.ball_j_shift.center + rad * (1 - 1e-9) * g
    return bool(fits_angle and fits_height and np.all(cone_contains(c, pts)))


def graph_profile(spec: LipschitzDomainSpec, mesh=256):
    """Lower boundary of the cone union along the axis over the shadow of E_ij (d = 1).

    h(u) = min over apexes of (axis coordinate + |u - u_apex| cot alpha); returns
    the mesh, h, and the finite-difference slopes.
    """
    if spec.apexes.shape[1] != 2:
        raise InvalidInput("graph profile is implemented for planar scenes")
    e = tangent_frame(spec.axis)[0]
    u0 = spec.apexes @ e
    h0 = spec.apexes @ spec.axis
    u = np.linspace(u0.min(), u0.max(), mesh)
    cot = 1 / math.tan(spec.alpha)
    h = np.min(h0[None, :] + np.abs(u[:, None] - u0[None, :]) * cot, axis=1)
    slopes = np.abs(np.diff(h) / np.diff(u)) if mesh > 1 and u[-1] > u[0] else np.zeros(0)
    return u, h, slopes


def overlap(scene: Scene, spec: LipschitzDomainSpec, resolution, rho=1.0, r=1.0, eps=None):
    """H^d(boundary of Omega & boundary of Omega') estimate and psi_emp = measure/(rho r)^d."""
    if len(spec.apexes) == 0:
        return 0.0, 0.0
    eps = resolution if eps is None else eps
    c, rad = spec.hull.bounding
    S = scene.sample_boundary(Ball(c, rad), resolution)
    if len(S) == 0:
        return 0.0, 0.0
    close = spec.hull.gap(S.points) <= eps
    idx = np.nonzero(close)[0]
    if len(idx):
        dist = spec.closure_distance(S.points[idx])
        close[idx] = dist <= eps
    m = float(S.weights[close].sum())
    return m, m / (rho * r) ** scene.d


def rho_reduce(scene: Scene, B: Ball, rho, C, tol=None):
    """B' = B(xi, 2 rho r) with xi a nearest boundary point to the interior ball center.

    The scene must be normalized (interior ball B(0, rho r / C) at the origin).
    """
    if not 0 < rho <= 1:
        raise InvalidInput("rho must lie in (0, 1]")
    r = B.radius
    D = scene.dimension
    o = np.zeros(D)
    tol = max(scene.eps, 1e-6 * r) if tol is None else tol
    dist, near = scene.nearest(o[None])
    dist, xi = float(dist[0]), near[0]
    want = rho * r / C
    if abs(dist - want) > tol:
        raise HypothesisViolated(f"dist(0, boundary) = {dist:.6g} but rho r/C = {want:.6g}",
                                 stage="rho_reduce")
    Bp = Ball(xi, 2 * rho * r)
    in3B = float(np.linalg.norm(xi - B.center)) + Bp.radius <= 3 * r * (1 + 1e-12)
    holds_inner = float(np.linalg.norm(xi)) + want <= Bp.radius * (1 + 1e-12)
    report = {"xi": xi.tolist(), "radius": Bp.radius, "inside_3B": bool(in3B),
              "contains_interior_ball": bool(holds_inner),
              "radius_ratio": Bp.radius / want, "expected_ratio": 2 * C}
    if not (in3B and holds_inner):
        raise HypothesisViolated("reduced ball fails its containments", stage="rho_reduce",
                                 witness=report)
    return Bp, report


# --------------------------------------------------------------------------
# pipeline


def default_grid_n(d):
    return 512 if d == 1 else 32


def visible_masks(scene: Scene, S: BoundarySample, grid: DirectionGrid, label, t,
                  chunk=400_000):
    """theta(xi) as a (nodes, samples) mask: segment foot -> xi in Omega and of length >= t.

    The open segment misses Sigma (so it stays in one component); the foot is
    tested for the label so that component is Omega.
    """
    from .visibility import visible_table

    tab = visible_table(scene, S, grid)
    ok = tab.bits & (tab.lengths >= t * (1 - 1e-12))
    want = scene.label_id(label)
    rows = max(1, chunk // max(len(S), 1))
    for s0 in range(0, len(grid), rows):
        th = grid.nodes[s0:s0 + rows]
        blk = ok[s0:s0 + rows]
        if not blk.any():
            continue
        F = feet(th, S.points)
        k, j = np.nonzero(blk)
        ids = scene.component_ids(F[k, j], check=False)
        blk[k, j] = ids == want
        ok[s0:s0 + rows] = blk
    return ok, tab


class _PorosityCache:
    def __init__(self, grid, eta, kappa):
        self.grid, self.eta, self.kappa = grid, eta, kappa
        self.store = {}

    def __call__(self, mask):
        key = np.packbits(mask).tobytes()
        res = self.store.get(key)
        if res is None:
            res = find_dense_cap(mask, self.grid, self.eta, self.kappa, check_resolution=False)
            self.store[key] = res
        return res


def _dense_caps(cache, masks):
    out = [cache(masks[:, k]) for k in range(masks.shape[1])]
    theta = np.array([p.theta for p in out]) if out else np.zeros((0, cache.grid.D))
    r = np.array([p.r for p in out])
    return out, theta, r


def _stage(report, name, t0):
    report["timings"][name] = round(time.perf_counter() - t0, 3)


def _verify_cones(scene, label, cones, step_of, C):
    """verify_cone at the nominal step; failures retried at step/4."""
    certs, retried, passed_on_retry = [], 0, 0
    for c in cones:
        cert = verify_cone(scene, label, c, step_of(c), C)
        if not cert.contained:
            retried += 1
            cert = verify_cone(scene, label, c, step_of(c) / 4, C)
            passed_on_retry += int(cert.contained)
        certs.append(cert)
    return certs, {"checked": len(cones), "contained": int(sum(c.contained for c in certs)),
                   "retried": retried, "passed_on_retry": passed_on_retry,
                   "min_margin": float(min((c.margin for c in certs), default=math.inf))}


def refine_cell(scene, label, ledger, grid, xs, ys, cell, resolution, region):
    """E_ij resampled inside B_j at a finer resolution, with the same assignment rules."""
    i, j = cell
    Bj = Ball(ys[j], ledger.tau)
    S = scene.sample_boundary(Bj, resolution, region=lambda p: region.contains(p, 1e-12))
    if len(S) == 0:
        return S, {}
    masks, _ = visible_masks(scene, S, grid, label, ledger.t)
    vis = grid.weights @ masks
    keep = vis >= ledger.kappa * grid.cap_measure * (1 - 1e-12)
    S, masks = S.subset(np.nonzero(keep)[0]), masks[:, keep]
    if len(S) == 0:
        return S, {}
    cache = _PorosityCache(grid, ledger.eta, ledger.kappa)
    caps, theta, r = _dense_caps(cache, masks)
    ii, jj, _, _ = assign(S.points, theta, xs, ys)
    sel = np.nonzero((ii == i) & (jj == j))[0]
    info = {"samples": int(len(S)), "members": int(len(sel)), "resolution": resolution,
            "min_r_over_delta": float(r.min() / grid.delta) if len(r) else None}
    return S.subset(sel), info


def run_proposition(scene: Scene, B: Ball, C, M=None, label=None, grid_n=None,
                    resolution=None, seed=0, check_stability=True, overrides=None, _depth=0):
    """Normalize, select E_kappa, build Omega_ij and measure its boundary overlap.

    ``overrides`` may fix delta, eta and upsilon; they are validated against
    the coupling constraints before anything is computed.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - {"delta", "eta", "upsilon"}
    if unknown:
        raise InvalidInput(f"unknown ledger overrides {sorted(unknown)}")
    report = {"input": {"ball": B.to_dict(), "C": C, "M": M, "label": label,
                        "grid_n": grid_n, "resolution": resolution, "seed": seed,
                        "overrides": overrides},
              "timings": {}, "stages": {}}
    t_all = time.perf_counter()
    r = B.radius
    d = scene.d
    if C < 2:
        raise InvalidInput("C must be at least 2")
    tol = max(scene.eps, 1e-7 * scene.window.radius)
    if float(scene.distance(B.center[None])[0]) > tol:
        raise InvalidInput("B must be centered on the boundary")

    t0 = time.perf_counter()
    meas = scene.boundary_measure(B, r / 2000) / r ** d
    if M is None:
        M = meas
    elif meas > M * (1 + 1e-9):
        raise HypothesisViolated(f"H^d(B & boundary)/r^d = {meas:.6g} exceeds M = {M}",
                                 stage="measure")
    report["stages"]["measure"] = {"ratio": meas, "M": M, "resolution": r / 2000}
    try:
        scn, norm = normalize(scene, B, C, label)
    except HypothesisViolated as exc:
        exc.stage = exc.stage or "normalize"
        raise
    label = norm.label
    report["stages"]["normalize"] = norm.to_dict()
    _stage(report, "normalize", t0)

    Bn = Ball(norm.forward(B.center)[0], r)
    if norm.rho < 1 - 1e-9:
        if _depth:
            raise ResolutionError("rho-reduction did not reach rho = 1", stage="rho_reduce")
        Bp, red = rho_reduce(scn, Bn, norm.rho, C)
        Bp_orig = Ball(norm.backward(Bp.center)[0], Bp.radius)
        sub = run_proposition(scene, Bp_orig, 2 * C, None, label, grid_n, resolution, seed,
                              check_stability, overrides, _depth=1)
        red["sub_C"] = 2 * C
        report["stages"]["rho_reduce"] = red
        report["sub"] = sub
        final_ok = sub["checks"]["inside_expanded_ball"]
        pts = sub["_members_original"]
        in4B = bool(np.all(np.linalg.norm(pts - B.center, axis=1) <= 4 * r * (1 + 1e-12))) \
            if len(pts) else True
        outer = sub["checks"]["outer_radius"] + float(np.linalg.norm(Bp_orig.center - B.center))
        report["checks"] = {"inside_4B": bool(in4B and outer <= 4 * r * (1 + 1e-12)),
                            "outer_radius": outer, "sub_inside_expanded_ball": final_ok}
        report["result"] = {"L": sub["result"]["L"], "psi": sub["result"]["measure"]
                            / (norm.rho * r) ** d, "measure": sub["result"]["measure"],
                            "rho": norm.rho, "path": "rho-reduction"}
        report["timings"]["total"] = round(time.perf_counter() - t_all, 3)
        return report

    t0 = time.perf_counter()
    ledger0 = ConstantLedger.derive(C, M, r, norm.a, d, **overrides)
    bad = [v for v in ledger0.violations() if not v.startswith("c0")]
    if bad:
        raise InvalidInput("; ".join(bad))
    n = grid_n or default_grid_n(d)
    theta0 = -np.eye(d + 1)[-1]
    grid = build_grid(theta0, ledger0.delta, n)
    T = lemma_hull(r, C, norm.a, d + 1)
    res = resolution or ledger0.tau / 4
    hc, hr = T.bounding
    S = scn.sample_boundary(Ball(hc, hr), res, region=lambda p: T.contains(p, 1e-12))
    if len(S) == 0:
        raise HypothesisViolated("S = T & boundary is empty", stage="visibility")
    masks, tab = visible_masks(scn, S, grid, label, ledger0.t)
    vis = grid.weights @ masks
    E_idx = np.nonzero(vis >= ledger0.kappa * grid.cap_measure * (1 - 1e-12))[0]
    E = S.subset(E_idx)
    D_meas = ball_volume(d) * (r / (2 * C)) ** d
    report["stages"]["visibility"] = {
        "grid": grid.to_dict(), "resolution": res, "samples": len(S), "S_weight": S.total,
        "kappa": ledger0.kappa, "E_kappa_samples": len(E), "E_kappa_weight": E.total,
        "D_measure": D_meas, "E_kappa_bound": D_meas / 2,
        "E_kappa_bound_holds": bool(E.total >= D_meas / 2 * (1 - 1e-9))}
    _stage(report, "visibility", t0)
    if len(E) == 0:
        raise HypothesisViolated("E_kappa is empty", stage="visibility")

    t0 = time.perf_counter()
    cache = _PorosityCache(grid, ledger0.eta, ledger0.kappa)
    caps, theta, rA = _dense_caps(cache, masks[:, E_idx])
    c0 = float(rA.min() / ledger0.delta)
    ledger = ledger0.with_c0(c0).validate()
    report["stages"]["porosity"] = {
        "distinct_sets": len(cache.store), "c0": c0,
        "certified": int(sum(p.certified for p in caps)),
        "levels_max": int(max(p.level for p in caps)),
        "resolution_ok": int(sum(grid.spacing <= p.eta * p.r / 4 for p in caps))}
    _stage(report, "porosity", t0)

    t0 = time.perf_counter()
    lemma_cones = [Cone(E.points[k], theta[k], ledger.upsilon * rA[k], ledger.t / 2)
                   for k in range(len(E))]
    _, lemma_info = _verify_cones(scn, label, lemma_cones, lambda c: ledger.t / 1e4, C)
    report["stages"]["lemma_cones"] = lemma_info
    _stage(report, "lemma_cones", t0)

    t0 = time.perf_counter()
    sep = ledger.half_angle
    xs = sphere_net(theta0, ledger.delta, sep, seed=seed)
    ys, _ = boundary_net(E.points, ledger.tau)
    ledger.n1, ledger.n2 = len(xs), len(ys)
    part = partition(E, theta, xs, ys)
    report["stages"]["partition"] = part.to_dict()
    report["stages"]["partition"]["pigeonhole_holds"] = bool(
        part.best_weight >= part.pigeonhole * (1 - 1e-12))
    _stage(report, "nets", t0)

    t0 = time.perf_counter()
    res_f = ledger.tau / 128
    Eij, rinfo = refine_cell(scn, label, ledger, grid, xs, ys, part.best, res_f, T)
    if len(Eij) == 0:
        Eij = E.subset(part.members())
        rinfo["fallback"] = "coarse"
    i, j = part.best
    cones = [Cone(p, xs[i], ledger.half_angle, ledger.t / 2) for p in Eij.points]
    certs, cone_info = _verify_cones(scn, label, cones, lambda c: ledger.t / 1e4, C)
    spec = build_domain(Eij, xs[i], ys[j], ledger, i, j, certs)
    report["stages"]["refine"] = rinfo
    report["stages"]["cones"] = cone_info
    _stage(report, "domain", t0)

    t0 = time.perf_counter()
    m, psi = overlap(scn, spec, res_f, norm.rho, r)
    members = spec.sample_members(2000, seed)
    ids = scn.component_ids(members, check=False) if len(members) else np.zeros(0, int)
    in_omega = bool(np.all(ids == scn.label_id(label)))
    expand = (1 + 1 / (4 * C)) * r
    dist_B = np.linalg.norm(members - Bn.center, axis=1) if len(members) else np.zeros(0)
    hcen, hrad = spec.hull.bounding
    outer = float(np.linalg.norm(hcen - Bn.center)) + hrad
    _, _, slopes = graph_profile(spec) if d == 1 and len(Eij) > 1 else (None, None, np.zeros(0))
    E_on_boundary = _apexes_on_boundary(spec)
    checks = {
        "members_in_omega": in_omega, "members_sampled": int(len(members)),
        "inside_expanded_ball": bool(np.all(dist_B <= expand * (1 + 1e-12))),
        "outer_radius": outer, "inside_4B": bool(outer <= 4 * r),
        "shifted_ball_in_cone": shifted_ball_in_cone(spec),
        "E_on_boundary": E_on_boundary,
        "max_graph_slope": float(slopes.max()) if len(slopes) else 0.0,
        "cot_half_angle": 1 / math.tan(ledger.half_angle),
        "L_matches": bool(ledger.L == 1 / math.cos(ledger.upsilon * ledger.c0 * ledger.delta / 2)),
    }
    report["stages"]["overlap"] = {"measure": m, "psi": psi, "resolution": res_f}
    if check_stability:
        g2 = build_grid(theta0, ledger.delta, 2 * n)
        E2, _ = refine_cell(scn, label, ledger, g2, xs, ys, part.best, res_f / 2, T)
        spec2 = build_domain(E2, xs[i], ys[j], ledger, i, j)
        m2, psi2 = overlap(scn, spec2, res_f / 2, norm.rho, r)
        rel = abs(psi2 - psi) / psi if psi > 0 else math.inf
        report["stages"]["overlap"].update({"psi_doubled": psi2, "relative_change": rel,
                                            "stable": bool(rel <= 0.05)})
    _stage(report, "overlap", t0)

    report["ledger"] = ledger.to_dict()
    report["domain"] = spec.to_dict()
    report["checks"] = checks
    report["result"] = {"L": ledger.L, "psi": psi, "measure": m, "rho": norm.rho, "path": "direct"}
    report["_members_original"] = norm.backward(members) if len(members) else members
    report["_spec"] = spec
    report["_scene"] = scn
    report["_norm"] = norm
    report["timings"]["total"] = round(time.perf_counter() - t_all, 3)
    return report


def _apexes_on_boundary(spec: LipschitzDomainSpec, steps=(1e-3, 1e-6)):
    """Each apex is a limit of members along the axis (and lies outside the open set)."""
    if len(spec.apexes) == 0:
        return True
    apex_in = spec.contains(spec.apexes)
    ok = ~apex_in
    for s in steps:
        ok &= spec.contains(spec.apexes + s * spec.height * spec.axis)
    return bool(np.all(ok))


def public_report(report):
    """Drop the in-memory helpers (keys starting with an underscore)."""
    if isinstance(report, dict):
        return {k: public_report(v) for k, v in report.items() if not k.startswith("_")}
    if isinstance(report, (list, tuple)):
        return [public_report(v) for v in report]
    return report
