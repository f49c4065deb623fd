"""Pipeline runs shared by several test modules (computed once per session)."""

import functools
import time

from gmt.builder import run_proposition
from gmt.scene import Ball, make_scene

FIXTURES = {
    "halfplane": (("halfplane", ()), Ball([0.0, 0.0], 1.0), None),
    "disk-complement": (("disk", ()), Ball([1.0, 0.0], 1.0), "outside"),
    "square": (("polygon", ()), Ball([1.0, 0.0], 1.0), None),
    "slab": (("slab", (("lower", -1 / 12), ("upper", 1 / 12))), Ball([0.0, 1 / 12], 1.0),
             "between"),
}


@functools.lru_cache(maxsize=None)
def proposition(name, C=3):
    (scene_name, params), ball, label = FIXTURES[name]
    scene = make_scene(scene_name, **dict(params))
    t0 = time.perf_counter()
    report = run_proposition(scene, ball, C, label=label)
    return report, time.perf_counter() - t0


DETECT = {
    "halfplane": (("halfplane", ()), Ball([0.0, 0.0], 1.0)),
    "disk": (("disk", ()), Ball([1.0, 0.0], 1.0)),
    "square": (("polygon", ()), Ball([1.0, 0.0], 1.0)),
    "koch": (("koch_snowflake", (("depth", 8),)), Ball([0.0, 0.0], 1.0)),
}


@functools.lru_cache(maxsize=None)
def tangents(name, C=3.0):
    from gmt.tangents import detect

    (scene_name, params), ball = DETECT[name]
    scene = make_scene(scene_name, **dict(params))
    t0 = time.perf_counter()
    res = detect(scene, ball, C)
    return res, time.perf_counter() - t0
