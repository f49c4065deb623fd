"""Dyadic stopping-time search for dense caps inside a direction set.

Directions live on a DirectionGrid whose chart square Q0 = [-delta, delta]^d
is cut into n^d cells with n a power of two, so level-m dyadic cubes are
exactly the grid cells.  A set A of grid nodes is rasterized to the cells
holding its nodes; that cell set is A'.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from .errors import HypothesisViolated, InvalidInput, ResolutionError
from .visibility import DirectionGrid, chart_distortion


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Cube of sidelength 2^level * l(Q0); level <= 0, anchor in [0, 2^-level)^d."""

    level: int
    anchor: tuple

    def __post_init__(self):
        if self.level > 0:
            raise InvalidInput("dyadic level must be <= 0")
        if any(a < 0 or a >= (1 << self.depth) for a in self.anchor):
            raise InvalidInput(f"anchor {self.anchor} outside level {self.level}")

    @property
    def depth(self):
        return -self.level

    @property
    def d(self):
        return len(self.anchor)

    def side(self, delta=0.5):
        return 2.0 * delta * 2.0 ** self.level

    def bounds(self, delta):
        h = self.side(delta)
        lo = -delta + h * np.asarray(self.anchor, float)
        return lo, lo + h

    def center(self, delta):
        lo, hi = self.bounds(delta)
        return 0.5 * (lo + hi)

    def ancestor(self, depth):
        shift = self.depth - depth
        if shift < 0:
            raise ValueError("ancestor must be shallower")
        return DyadicCube(-depth, tuple(a >> shift for a in self.anchor))

    def contains(self, other: "DyadicCube"):
        return other.depth >= self.depth and other.ancestor(self.depth) == self

    def cells(self, m):
        """Slices of the level-m cell array covered by this cube."""
        k = 1 << (m - self.depth)
        return tuple(slice(a * k, (a + 1) * k) for a in self.anchor)

    def to_dict(self):
        return {"level": self.level, "anchor": list(self.anchor)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["level"]), tuple(int(a) for a in d["anchor"]))


def _grid_depth(n):
    m = int(round(math.log2(n))) if n > 0 else -1
    if m < 0 or (1 << m) != n:
        raise InvalidInput(f"grid resolution {n} is not a power of two")
    return m


def _pool_any(a):
    """OR over 2^d children: level p+1 array -> level p array."""
    if a.ndim == 1:
        return a.reshape(-1, 2).any(axis=1)
    k = a.shape[0] // 2
    return a.reshape(k, 2, k, 2).any(axis=(1, 3))


def meets_pyramid(cells):
    """meets[p][j] is True when dyadic cube (depth p, anchor j) meets the cell set."""
    cells = np.asarray(cells, bool)
    m = _grid_depth(cells.shape[0])
    out = [None] * (m + 1)
    out[m] = cells
    for p in range(m - 1, -1, -1):
        out[p] = _pool_any(out[p + 1])
    return out


def shallowest_empty(meets):
    """Per cube, the depth of the largest dyadic cube inside it missing A' (inf if none)."""
    m = len(meets) - 1
    se = [None] * (m + 1)
    se[m] = np.where(meets[m], np.inf, float(m))
    for p in range(m - 1, -1, -1):
        child = se[p + 1]
        if child.ndim == 1:
            pooled = child.reshape(-1, 2).min(axis=1)
        else:
            k = child.shape[0] // 2
            pooled = child.reshape(k, 2, k, 2).min(axis=(1, 3))
        se[p] = np.where(meets[p], pooled, float(p))
    return se


def complement_cubes(cells) -> list[DyadicCube]:
    """Maximal dyadic cubes of Q0 whose interiors miss the cell set A'."""
    cells = np.asarray(cells, bool)
    if not cells.any():
        raise InvalidInput("A' is empty")
    meets = meets_pyramid(cells)
    out = []
    for p, lev in enumerate(meets):
        empty = ~lev
        if p > 0:
            parent = meets[p - 1]
            for ax in range(lev.ndim):
                parent = np.repeat(parent, 2, axis=ax)
            empty &= parent
        for idx in np.argwhere(empty):
            out.append(DyadicCube(-p, tuple(int(i) for i in idx)))
    return out


@dataclass
class PackingLedger:
    """Carleson sums lambda(Q) in exact arithmetic, in units where l(Q0) = 1."""

    d: int
    depth: int
    values: dict
    measure_q0: Fraction

    def lam(self, cube: DyadicCube) -> Fraction:
        return self.values.get(cube, Fraction(0))

    @property
    def total(self) -> Fraction:
        """sum over dyadic Q of lambda(Q) |Q|."""
        s = Fraction(0)
        for q, v in self.values.items():
            s += v * Fraction(1, 1 << (q.depth * self.d))
        return s * self.measure_q0

    @property
    def bound(self) -> Fraction:
        return 2 * self.measure_q0

    def holds(self):
        return self.total <= self.bound

    def by_level(self):
        """level -> (number of cubes with lambda > 0, sum of lambda)."""
        out = {}
        for q, v in self.values.items():
            n, s = out.get(q.level, (0, Fraction(0)))
            out[q.level] = (n + 1, s + v)
        return dict(sorted(out.items(), reverse=True))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["level", "anchor", "lambda"])
        for q in sorted(self.values):
            w.writerow([q.level, " ".join(map(str, q.anchor)), float(self.values[q])])
        return buf.getvalue()

    def to_dict(self):
        return {
            "total": float(self.total),
            "bound": float(self.bound),
            "holds": bool(self.holds()),
            "levels": {str(k): {"cubes": n, "lambda_sum": float(s)}
                       for k, (n, s) in self.by_level().items()},
        }


def packing_ledger(cubes, delta=0.5, d=None) -> PackingLedger:
    """lambda(Q) = sum over Q_j inside Q of (l(Q_j)/l(Q))^(d+1), for every dyadic Q."""
    cubes = list(cubes)
    if d is None:
        if not cubes:
            raise InvalidInput("dimension needed for an empty family")
        d = cubes[0].d
    seen = set(cubes)
    if len(seen) != len(cubes):
        raise InvalidInput("cube family has duplicates")
    for q in cubes:
        if q.d != d:
            raise InvalidInput("mixed dimensions in cube family")
        for p in range(q.depth):
            if q.ancestor(p) in seen:
                raise InvalidInput(f"overlapping cubes {q.ancestor(p)} and {q}")
    deepest = max((q.depth for q in cubes), default=0)
    values: dict = {}
    for q in cubes:
        for p in range(q.depth + 1):
            key = q.ancestor(p)
            values[key] = values.get(key, Fraction(0)) + Fraction(1, 1 << ((q.depth - p) * (d + 1)))
    return PackingLedger(d, deepest, values, (2 * Fraction(delta)) ** d)


def n0_bound(d, eta, c, kappa):
    return 2.0 ** (d + 2) / (eta ** (d + 1) * c * kappa)


def density_constant(grid: DirectionGrid):
    """c with |A'| >= c kappa delta^d, namely 2^-d |B(delta)| / delta^d."""
    return 2.0 ** -grid.d * grid.cap_measure / grid.delta ** grid.d


def stopping_eta(eta, d):
    """Relative complement size used by the stopping rule.

    A point of the stopping cube Q sits within sqrt(d)*eta_s*l(Q) of A' and
    r_A >= 3 l(Q)/8, so eta_s = eta/(4 sqrt d) (rounded down to a power of
    two) leaves room for the chart distortion in the eta*r_A certificate.
    """
    raw = eta / (4.0 * math.sqrt(d))
    return 2.0 ** math.floor(math.log2(raw))


def face_distance(theta, grid: DirectionGrid, cube: DyadicCube):
    """Arclength from theta to the boundary of the lift of a chart cube."""
    lo, hi = cube.bounds(grid.delta)
    y = grid.chart(theta)[0]
    if np.any(y < lo) or np.any(y > hi):
        return 0.0
    best = np.inf
    for i in range(grid.d):
        g = math.acos(np.clip(y[i], -1, 1))
        for a in (lo[i], hi[i]):
            if abs(a) < 1:
                best = min(best, abs(g - math.acos(a)))
    return float(best)


def arc_to_set(points, targets):
    """Arclength from each point to the nearest target direction."""
    if len(targets) == 0:
        return np.full(len(points), np.inf)
    chord, _ = cKDTree(targets).query(points, k=1)
    return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))


@dataclass
class PorosityResult:
    theta: np.ndarray
    r: float
    cube: DyadicCube
    ledger: PackingLedger
    level: int
    eta: float
    kappa: float
    c0: float
    N0: float
    theta_index: int = -1
    certificate: dict = field(default_factory=dict)
    counts: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)

    @property
    def certified(self):
        return bool(self.certificate.get("holds", False))

    def to_dict(self):
        return {
            "theta": self.theta.tolist(),
            "theta_index": self.theta_index,
            "r": self.r,
            "cube": self.cube.to_dict(),
            "level": self.level,
            "eta": self.eta,
            "kappa": self.kappa,
            "c0": self.c0,
            "N0": self.N0,
            "certificate": self.certificate,
            "counts": self.counts,
            "constants": self.constants,
            "ledger": self.ledger.to_dict(),
        }


def _as_mask(A, grid):
    A = np.asarray(A)
    if A.dtype == bool:
        if A.shape != (len(grid),):
            raise InvalidInput("direction mask does not match the grid")
        return A
    mask = np.zeros(len(grid), bool)
    mask[A.astype(int)] = True
    return mask


def certify(grid: DirectionGrid, mask, theta, r, eta):
    """Exhaustive check: every grid node in B(theta, r) lies within eta*r of A."""
    arc = np.arccos(np.clip(grid.nodes @ theta, -1, 1))
    inside = arc <= r
    dist = arc_to_set(grid.nodes[inside], grid.nodes[mask])
    worst = float(dist.max()) if len(dist) else 0.0
    return {"holds": bool(worst <= eta * r), "nodes": int(inside.sum()),
            "max_distance": worst, "limit": eta * r}


def find_dense_cap(A, grid: DirectionGrid, eta, kappa, check_resolution=True) -> PorosityResult:
    """Find theta_A in A and r_A so that B(theta_A, r_A) is eta*r_A-close to A."""
    if not 0 < eta < 1:
        raise InvalidInput("eta must lie in (0, 1)")
    if kappa <= 0:
        raise InvalidInput("kappa must be positive")
    m = _grid_depth(grid.n)
    mask = _as_mask(A, grid)
    weight = float(grid.weights[mask].sum())
    need = kappa * grid.cap_measure
    if weight < need * (1 - 1e-12):
        raise HypothesisViolated(f"|A| = {weight:.6g} below kappa|B(delta)| = {need:.6g}",
                                 stage="porosity")
    d = grid.d
    cells = mask.reshape(grid.shape)
    meets = meets_pyramid(cells)
    se = shallowest_empty(meets)
    eta_s = stopping_eta(eta, d)
    e = int(round(-math.log2(eta_s)))

    h = grid.spacing
    area_a = float(cells.sum()) * h ** d
    area_q0 = (2 * grid.delta) ** d
    counts = []
    chosen = None
    for p in range(m + 1):
        counts.append({"level": -p, "meeting": int(meets[p].sum()),
                       "M_n": 2.0 ** (p * d - 1) * area_a / area_q0})
        ok = meets[p] & (se[p] - p > e)
        if ok.any():
            idx = np.argwhere(ok)[0]
            chosen = DyadicCube(-p, tuple(int(i) for i in idx))
            break
    assert chosen is not None  # single cells meeting A' always qualify

    sl = chosen.cells(m)
    sub = np.zeros(grid.shape, bool)
    sub[sl] = True
    cand = np.flatnonzero(mask & sub.ravel())
    ctr = chosen.center(grid.delta)
    dc = np.linalg.norm(grid.coords[cand] - ctr, axis=1)
    j = int(cand[np.argmin(dc)])
    theta = grid.nodes[j]
    # B(theta_A, r_A) inside the lift of Q and inside the cap B(delta), so r_A < delta
    rim = grid.delta - float(np.arccos(np.clip(theta @ grid.theta0, -1, 1)))
    r = min(face_distance(theta, grid, chosen), rim)
    if check_resolution and h > eta * r / 4:
        raise ResolutionError(f"grid spacing {h:.3g} exceeds eta*r_A/4 = {eta * r / 4:.3g}",
                              stage="porosity")
    cert = certify(grid, mask, theta, r, eta)
    c = density_constant(grid)
    N0 = n0_bound(d, eta, c, kappa)
    side = chosen.side(grid.delta)
    c1 = r / side
    cert["c2"] = cert["max_distance"] / (eta_s * r) if r > 0 else math.inf
    ledger = packing_ledger(complement_cubes(cells), Fraction(grid.delta), d)
    return PorosityResult(
        theta=theta, r=r, cube=chosen, ledger=ledger, level=chosen.depth,
        eta=eta, kappa=kappa, c0=r / grid.delta, N0=N0, theta_index=j,
        certificate=cert, counts=counts,
        constants={"c": c, "c1": c1, "eta_stop": eta_s,
                   "chart_distortion": chart_distortion(d, grid.delta),
                   "level_bound": math.ceil(N0),
                   "r_lower_bound": 2.0 ** -math.ceil(N0) * c1 * grid.delta},
    )
