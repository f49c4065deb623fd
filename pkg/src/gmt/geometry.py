"""Small linear-algebra helpers shared by the pipelines."""

import math

import numpy as np


def unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero vector has no direction")
    return v / n


def as_direction(v, tol=1e-12):
    """Validate a length-(d+1) direction; renormalizes tiny drift."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"direction must be unit length, got norm {n}")
    return v / n if abs(n - 1.0) > tol else v


def tangent_frame(axis):
    """Orthonormal vectors spanning the hyperplane orthogonal to ``axis``.

    The frame is a fixed, continuous choice: rows ``e_1..e_d`` with
    ``(e_1, .., e_d, axis)`` positively oriented.
    """
    axis = unit(axis)
    D = len(axis)
    if D == 2:
        return np.array([[axis[1], -axis[0]]])
    if D == 3:
        helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = unit(helper - (helper @ axis) * axis)
        e2 = np.cross(axis, e1)
        return np.array([e1, e2])
    raise ValueError("only R^2 and R^3 are supported")


def rotation_taking(u, v):
    """Rotation matrix R with R @ u = v for unit vectors u, v."""
    u = unit(u)
    v = unit(v)
    D = len(u)
    if D == 2:
        ang = math.atan2(v[1], v[0]) - math.atan2(u[1], u[0])
        return rotation_2d(ang)
    c = float(u @ v)
    w = np.cross(u, v)
    s = np.linalg.norm(w)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        perp = tangent_frame(u)[0]
        return 2 * np.outer(perp, perp) - np.eye(3)
    k = w / s
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + s * K + (1 - c) * (K @ K)


def rotation_2d(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def geodesic(u, v):
    """Arclength distance on the sphere (rows broadcast)."""
    dots = np.clip(np.sum(np.asarray(u) * np.asarray(v), axis=-1), -1.0, 1.0)
    return np.arccos(dots)


def ball_volume(d):
    """w_d = Lebesgue measure of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def cap_area(d, radius):
    """Measure of a geodesic ball of the given radius in S^d (d = 1, 2)."""
    if d == 1:
        return 2.0 * radius
    if d == 2:
        return 2.0 * math.pi * (1.0 - math.cos(radius))
    raise ValueError("d must be 1 or 2")


def hull_gap(points, c1, r1, c2, r2, iters=60):
    """min over lam of |p - c(lam)| - r(lam) for the convex hull of two balls.

    The hull of B(c1, r1) and B(c2, r2) is the union of the interpolated
    balls, so a point lies in it iff this (convex in lam) gap is <= 0.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    c1 = np.asarray(c1, float)
    c2 = np.asarray(c2, float)
    lo = np.zeros(len(p))
    hi = np.ones(len(p))
    phi = (math.sqrt(5) - 1) / 2

    def f(lam):
        c = c1[None, :] + lam[:, None] * (c2 - c1)[None, :]
        return np.linalg.norm(p - c, axis=1) - (r1 + lam * (r2 - r1))

    for _ in range(iters):
        a = hi - phi * (hi - lo)
        b = lo + phi * (hi - lo)
        fa, fb = f(a), f(b)
        left = fa < fb
        hi = np.where(left, b, hi)
        lo = np.where(left, lo, a)
    lam = 0.5 * (lo + hi)
    return np.minimum(np.minimum(f(lam), f(np.zeros(len(p)))), f(np.ones(len(p))))


class Hull:
    """Convex hull of two closed balls B(c1, r1) and B(c2, r2)."""

    def __init__(self, c1, r1, c2, r2):
        self.c1 = np.asarray(c1, float)
        self.c2 = np.asarray(c2, float)
        self.r1 = float(r1)
        self.r2 = float(r2)

    def gap(self, points):
        return hull_gap(points, self.c1, self.r1, self.c2, self.r2)

    def contains(self, points, slack=0.0):
        return self.gap(points) <= slack

    def interior(self, points, margin=0.0):
        return self.gap(points) < -margin

    @property
    def bounding(self):
        """(center, radius) of a ball containing the hull."""
        c = 0.5 * (self.c1 + self.c2)
        half = 0.5 * float(np.linalg.norm(self.c2 - self.c1))
        return c, half + max(self.r1, self.r2)

    def chord(self, x, direction, span=None):
        """Parameter interval [s0, s1] of {x + s u} inside the hull.

        The hull is the union of the balls B(c(lam), r(lam)) with c, r affine
        in lam, so the far end max_lam s_+(lam) is a concave maximization:
        a coarse scan in lam then golden-section refinement. Vectorized over
        rows of x (and of direction). Rows missing the hull get s0 > s1.
        """
        x = np.atleast_2d(np.asarray(x, float))
        u = np.broadcast_to(np.atleast_2d(np.asarray(direction, float)), x.shape)
        out = []
        for sign in (-1.0, 1.0):
            v = sign * u

            def s_plus(lam):
                c = self.c1[None, :] + lam[:, None] * (self.c2 - self.c1)[None, :]
                r = self.r1 + lam * (self.r2 - self.r1)
                w = c - x
                along = np.sum(w * v, axis=1)
                perp2 = np.sum(w * w, axis=1) - along * along
                disc = r * r - perp2
                return np.where(disc >= 0, along + np.sqrt(np.maximum(disc, 0.0)), -np.inf)

            grid = np.linspace(0.0, 1.0, 65)
            vals = np.stack([s_plus(np.full(len(x), g)) for g in grid], axis=1)
            k = np.argmax(vals, axis=1)
            lo = grid[np.maximum(k - 1, 0)]
            hi = grid[np.minimum(k + 1, len(grid) - 1)]
            phi = (math.sqrt(5) - 1) / 2
            for _ in range(50):
                a_ = hi - phi * (hi - lo)
                b_ = lo + phi * (hi - lo)
                fa, fb = s_plus(a_), s_plus(b_)
                left = fa >= fb
                hi = np.where(left, b_, hi)
                lo = np.where(left, lo, a_)
            best = np.maximum(vals.max(axis=1), s_plus(0.5 * (lo + hi)))
            out.append(sign * best)
        return out[0], out[1]

    def to_dict(self):
        return {"c1": self.c1.tolist(), "r1": self.r1, "c2": self.c2.tolist(), "r2": self.r2}
