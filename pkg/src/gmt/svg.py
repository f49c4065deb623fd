"""Minimal SVG output for planar scenes; every element carries an id."""

from __future__ import annotations

import math
from xml.sax.saxutils import quoteattr

import numpy as np

from .errors import InvalidInput
from .scene import Ball, Graph, HalfSpace, Polyline, Scene, SolidPolygons, Sphere
from .geometry import tangent_frame

STYLE = {
    "sigma": 'fill="none" stroke="#222" stroke-width="1.2"',
    "hull": 'fill="none" stroke="#2a6" stroke-dasharray="4 3"',
    "ball": 'fill="none" stroke="#26a"',
    "cone": 'fill="#e84" fill-opacity="0.25" stroke="#c62" stroke-width="0.6"',
    "point": 'fill="#c22"',
    "sample": 'fill="#999"',
}


class Canvas:
    """Maps the scene window onto a square viewport (y up)."""

    def __init__(self, window: Ball, size=640, pad=12):
        if len(window.center) != 2:
            raise InvalidInput("SVG output is only available for planar scenes")
        self.c = np.asarray(window.center, float)
        self.R = float(window.radius)
        self.size = size
        self.pad = pad
        self.scale = (size - 2 * pad) / (2 * self.R)
        self.items = []
        self.ids = {}

    def xy(self, p):
        p = np.atleast_2d(p)
        x = self.pad + (p[:, 0] - self.c[0] + self.R) * self.scale
        y = self.pad + (self.c[1] + self.R - p[:, 1]) * self.scale
        return np.column_stack([x, y])

    def _add(self, eid, ref, body):
        if eid in self.ids:
            raise InvalidInput(f"duplicate SVG id {eid!r}")
        self.ids[eid] = ref
        self.items.append(body)

    def path(self, eid, ref, pts, kind="sigma", closed=False):
        q = self.xy(pts)
        d = "M " + " L ".join(f"{x:.2f} {y:.2f}" for x, y in q) + (" Z" if closed else "")
        self._add(eid, ref, f'<path id={quoteattr(eid)} class="{kind}" d="{d}" {STYLE[kind]}/>')

    def circle(self, eid, ref, center, radius, kind="ball"):
        (x, y), = self.xy(center)
        self._add(eid, ref, f'<circle id={quoteattr(eid)} class="{kind}" cx="{x:.2f}" '
                            f'cy="{y:.2f}" r="{radius * self.scale:.2f}" {STYLE[kind]}/>')

    def dot(self, eid, ref, p, kind="point", px=1.8):
        (x, y), = self.xy(p)
        self._add(eid, ref, f'<circle id={quoteattr(eid)} class="{kind}" cx="{x:.2f}" '
                            f'cy="{y:.2f}" r="{px}" {STYLE[kind]}/>')

    def cone(self, eid, ref, apex, axis, alpha, height, arc=12):
        apex = np.asarray(apex, float)
        e = tangent_frame(axis)[0]
        ang = np.linspace(-alpha, alpha, arc)
        rim = apex + height * (np.cos(ang)[:, None] * np.asarray(axis) + np.sin(ang)[:, None] * e)
        self.path(eid, ref, np.vstack([apex, rim]), "cone", closed=True)

    def render(self):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.size}" '
                f'height="{self.size}" viewBox="0 0 {self.size} {self.size}">')
        return "\n".join([head, *self.items, "</svg>"]) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.render())


def draw_scene(cv: Canvas, scene: Scene, max_vertices=20000):
    """Sigma clipped (roughly) to the window; one element per primitive piece."""
    R, c = scene.window.radius, scene.window.center
    for k, p in enumerate(scene.primitives):
        ref = f"scene.primitives[{k}]"
        if isinstance(p, HalfSpace):
            foot = c - (c @ p.normal - p.offset) * p.normal
            h = math.sqrt(max(R * R - float(np.sum((foot - c) ** 2)), 0.0))
            e = tangent_frame(p.normal)[0]
            cv.path(f"sigma-{k}", ref, np.array([foot - h * e, foot + h * e]))
        elif isinstance(p, Sphere):
            cv.circle(f"sigma-{k}", ref, p.center, p.radius, "sigma")
        elif isinstance(p, SolidPolygons):
            for m, poly in enumerate(p.polygons):
                cv.path(f"sigma-{k}-{m}", f"{ref}.polygons[{m}]", np.asarray(poly), closed=True)
        elif isinstance(p, Graph):
            pts = np.column_stack([p.xs, p.ys])
            cv.path(f"sigma-{k}", ref, pts[:: max(1, len(pts) // max_vertices)])
        elif isinstance(p, Polyline):
            v = p.vertices
            step = max(1, len(v) // max_vertices)
            cv.path(f"sigma-{k}", ref, v[::step], closed=p.closed)
    return cv


def svg_ids(text):
    """Element ids in an SVG document (for round-trip checks)."""
    import xml.etree.ElementTree as ET

    root = ET.fromstring(text)
    return [el.get("id") for el in root.iter() if el.get("id") is not None]
