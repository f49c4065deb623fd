"""Truncated cones at boundary points and ray-cast containment checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conditions import _search
from .errors import InvalidInput, ResolutionError
from .geometry import as_direction, tangent_frame
from .scene import BOUNDARY, Ball, Scene


@dataclass
class Cone:
    """{x : (x - apex).axis >= |x - apex| cos(alpha), |x - apex| <= height}."""

    apex: np.ndarray
    axis: np.ndarray
    alpha: float
    height: float

    def __post_init__(self):
        self.apex = np.asarray(self.apex, float)
        self.axis = as_direction(self.axis)
        self.alpha = float(self.alpha)
        self.height = float(self.height)
        if not 0 < self.alpha < math.pi / 2:
            raise InvalidInput("cone half-angle must lie in (0, pi/2)")
        if self.height <= 0:
            raise InvalidInput("cone height must be positive")
        if len(self.apex) != len(self.axis):
            raise InvalidInput("apex and axis dimensions differ")

    def flipped(self):
        return Cone(self.apex, -self.axis, self.alpha, self.height)

    def scaled(self, alpha=None, height=None):
        return Cone(self.apex, self.axis, self.alpha if alpha is None else alpha,
                    self.height if height is None else height)

    def to_dict(self):
        return {"apex": self.apex.tolist(), "axis": self.axis.tolist(),
                "alpha": self.alpha, "height": self.height}

    @classmethod
    def from_dict(cls, d):
        return cls(d["apex"], d["axis"], d["alpha"], d["height"])


def cone_contains(c: Cone, p):
    """Exact membership; vectorized over rows of p."""
    x = np.atleast_2d(np.asarray(p, float)) - c.apex
    n = np.linalg.norm(x, axis=1)
    out = (x @ c.axis >= n * math.cos(c.alpha)) & (n <= c.height)
    return out if np.ndim(p) > 1 else bool(out[0])


def ray_net(axis, alpha, spacing):
    """Unit directions covering the cap B(axis, alpha) within angular ``spacing``.

    Chart grid of the cap (nodes inside the cap) plus a ring on the rim, so
    the extreme rays of the cone are always cast.
    """
    axis = as_direction(axis)
    D = len(axis)
    if D == 2:
        k = max(2, math.ceil(2 * alpha / spacing) + 1)
        ang = np.linspace(-alpha, alpha, k)
        e = tangent_frame(axis)[0]
        return np.cos(ang)[:, None] * axis + np.sin(ang)[:, None] * e
    frame = tangent_frame(axis)
    # chart cells of side h have lifted diameter <= h sqrt(2)/cos(alpha)
    h = spacing * math.cos(alpha) / math.sqrt(2)
    m = max(1, math.ceil(2 * math.sin(alpha) / h))
    g = -math.sin(alpha) + (2 * math.sin(alpha) / m) * (np.arange(m) + 0.5)
    U, V = np.meshgrid(g, g, indexing="ij")
    y = np.column_stack([U.ravel(), V.ravel()])
    y = y[np.sum(y * y, axis=1) <= math.sin(alpha) ** 2]
    k = max(8, math.ceil(2 * math.pi * math.sin(alpha) / spacing))
    phi = 2 * math.pi * np.arange(k) / k
    rim = math.sin(alpha) * np.column_stack([np.cos(phi), np.sin(phi)])
    y = np.vstack([np.zeros((1, 2)), y, rim])
    return y @ frame + np.sqrt(np.maximum(1 - np.sum(y * y, axis=1), 0))[:, None] * axis


@dataclass
class ConeCertificate:
    contained: bool
    samples: int
    margin: float
    cone: Cone
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        w = None
        if self.witness is not None:
            w = {k: (v.tolist() if isinstance(v, np.ndarray) else
                     v.to_dict() if isinstance(v, Ball) else v)
                 for k, v in self.witness.items()}
        return {"contained": self.contained, "samples": self.samples, "margin": self.margin,
                "cone": self.cone.to_dict(), "witness": w, "details": self.details}


def shadow_angle(ball: Ball, apex):
    """Angular radius of a ball as seen from a point outside it."""
    dist = float(np.linalg.norm(ball.center - np.asarray(apex, float)))
    if dist <= ball.radius:
        return math.pi
    return math.asin(ball.radius / dist)


def blocking_angle(zeta, apex, C, alpha):
    """Guaranteed angular radius alpha/(4C) of the blocking ball's shadow."""
    if np.allclose(np.asarray(zeta, float), np.asarray(apex, float), atol=0, rtol=0):
        raise InvalidInput("zeta must differ from the apex")
    return alpha / (4.0 * C)


def find_blocking_ball(scene: Scene, label, zeta, apex, alpha, C):
    """Exterior corkscrew ball inside B(zeta, |zeta - apex| sin alpha), or the best found."""
    rho = float(np.linalg.norm(np.asarray(zeta) - np.asarray(apex))) * math.sin(alpha)
    found = _search(scene, np.asarray(zeta, float), rho, C, "exterior", label)
    if not found:
        return None, rho, False
    g, z = found["exterior"]
    return Ball(z, g), rho, bool(g >= rho / C * (1 - 1e-9))


def _side_label(scene, apex, axis, reach):
    """Component seen along the axis just off the apex."""
    hit = scene.cast(apex[None], (apex + reach * axis)[None], open_start=True)[0]
    s = 0.5 * reach * (min(float(hit), 1.0))
    p = apex + s * axis
    if np.linalg.norm(p - scene.window.center) > scene.window.radius:
        return None
    lab = scene.classify(p)
    return None if lab in (BOUNDARY, "unresolved") else lab


def verify_cone(scene: Scene, label, c: Cone, step, C=4.0, tol=None,
                witness=True) -> ConeCertificate:
    """Cast rays through a net of the cap B(axis, alpha) out to length height.

    ``label`` None means any point of Sigma blocks (no component test); the
    blocking-ball search then uses the component seen along the axis.
    """
    if step <= 0 or step > c.alpha * c.height:
        raise ResolutionError(f"step {step} too large for alpha*t = {c.alpha * c.height}",
                              stage="cones")
    tol = max(scene.eps, 1e-7 * scene.window.radius) if tol is None else tol
    if float(scene.distance(c.apex[None])[0]) > tol:
        raise InvalidInput("cone apex is not on Sigma")
    if label is not None:
        scene.label_id(label)
    dirs = ray_net(c.axis, c.alpha, step / c.height)
    reach = 2.0 * c.height
    ends = c.apex + reach * dirs
    r_win = scene.window.radius
    # clip rays to the window; hits past the window count as clear
    off = ends - scene.window.center
    far = np.linalg.norm(off, axis=1) > r_win
    if far.any():
        b = dirs @ (c.apex - scene.window.center)
        cc = np.sum((c.apex - scene.window.center) ** 2) - r_win ** 2
        s_exit = -b + np.sqrt(np.maximum(b * b - cc, 0))
        s_exit = np.minimum(s_exit, reach)
        if np.any(s_exit[far] < c.height * (1 - 1e-12)):
            raise InvalidInput("cone leaves the scene window")
        lens = np.where(far, s_exit, reach)
    else:
        lens = np.full(len(dirs), reach)
    tpar = scene.cast(np.broadcast_to(c.apex, dirs.shape), c.apex + lens[:, None] * dirs,
                      open_start=True)
    hdist = np.where(np.isfinite(tpar), tpar * lens, np.inf)
    margin = float(min(np.min(hdist), reach) - c.height)
    blocked = hdist <= c.height
    details = {"rays": int(len(dirs)), "spacing": step / c.height, "blocked_rays": int(blocked.sum())}
    if not blocked.any():
        if label is not None:
            mids = c.apex + 0.5 * c.height * dirs
            ids = scene.component_ids(mids, check=False)
            want = scene.label_id(label)
            wrong = ids != want
            if wrong.any():
                raise InvalidInput(f"cone at {c.apex.tolist()} opens into another component "
                                   f"than {label!r}")
        return ConeCertificate(True, len(dirs), margin, c, None, details)
    k = int(np.argmin(hdist))
    zeta = c.apex + hdist[k] * dirs[k]
    on_sigma = float(scene.distance(zeta[None])[0]) <= tol
    details["zeta_on_sigma"] = bool(on_sigma)
    wit = {"zeta": zeta, "distance": float(hdist[k]), "direction": dirs[k]}
    if not witness:
        return ConeCertificate(False, len(dirs), margin, c, wit, details)
    side = label if label is not None else _side_label(scene, c.apex, c.axis, c.height)
    if side is not None:
        ball, rho, ok = find_blocking_ball(scene, side, zeta, c.apex, c.alpha, C)
        wit["search_radius"] = rho
        if ball is not None:
            wit["ball"] = ball
            wit["psi"] = shadow_angle(ball, c.apex)
            wit["bound"] = blocking_angle(zeta, c.apex, C, c.alpha)
            wit["corkscrew"] = ok
    return ConeCertificate(False, len(dirs), margin, c, wit, details)


def two_sided_cone(scene: Scene, xi, theta, alpha, t, step=None, C=4.0, witness=True):
    """Certificates for C(xi, theta, alpha, t) and C(xi, -theta, alpha, t) against Sigma."""
    c = Cone(xi, theta, alpha, t)
    step = alpha * t / 8 if step is None else step
    return (verify_cone(scene, None, c, step, C, witness=witness),
            verify_cone(scene, None, c.flipped(), step, C, witness=witness))
