"""Pure-NumPy fallback for the compiled first-hit kernel.

Same contract as ``gmt._kernels.first_hits``; used when the extension is not
built, and as the reference side of the kernel equivalence tests.
"""

import math

import numpy as np


def _edge_hits(px, py, dx, dy, dd, tmin, ea, eb, eps):
    ax, ay = ea[:, 0], ea[:, 1]
    ex = eb[:, 0] - ax
    ey = eb[:, 1] - ay
    wx = ax - px
    wy = ay - py
    den = dx * ey - dy * ex
    best = np.full(len(ax), np.inf)
    ok = np.abs(den) > 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ok, (wx * ey - wy * ex) / np.where(ok, den, 1.0), np.inf)
        u = np.where(ok, (wx * dy - wy * dx) / np.where(ok, den, 1.0), -1.0)
    proper = ok & (t >= tmin) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
    best[proper] = t[proper]
    eps2 = eps * eps
    if dd > 0.0:
        for vx, vy in ((ax, ay), (eb[:, 0], eb[:, 1])):
            tv = ((vx - px) * dx + (vy - py) * dy) / dd
            cx = px + tv * dx - vx
            cy = py + tv * dy - vy
            g = (tv >= tmin) & (tv <= 1.0) & (tv < best) & (cx * cx + cy * cy <= eps2)
            best[g] = tv[g]
    ee = ex * ex + ey * ey
    nz = ee > 0.0
    safe = np.where(nz, ee, 1.0)
    if tmin <= 0.0:
        uu = np.clip(((px - ax) * ex + (py - ay) * ey) / safe, 0.0, 1.0)
        cx = ax + uu * ex - px
        cy = ay + uu * ey - py
        g = nz & (best > 0.0) & (cx * cx + cy * cy <= eps2)
        best[g] = 0.0
    uu = np.clip(((px + dx - ax) * ex + (py + dy - ay) * ey) / safe, 0.0, 1.0)
    cx = ax + uu * ex - px - dx
    cy = ay + uu * ey - py - dy
    g = nz & (best > 1.0) & (cx * cx + cy * cy <= eps2)
    best[g] = 1.0
    return best


def _cells_along(px, py, dx, dy, t0, t1, x0, y0, cell, nx, ny):
    ix = min(max(int(math.floor((px + t0 * dx - x0) / cell)), 0), nx - 1)
    iy = min(max(int(math.floor((py + t0 * dy - y0) / cell)), 0), ny - 1)
    if dx > 0:
        stepx, tdx, tmx = 1, cell / dx, (x0 + (ix + 1) * cell - px) / dx
    elif dx < 0:
        stepx, tdx, tmx = -1, -cell / dx, (x0 + ix * cell - px) / dx
    else:
        stepx, tdx, tmx = 0, math.inf, math.inf
    if dy > 0:
        stepy, tdy, tmy = 1, cell / dy, (y0 + (iy + 1) * cell - py) / dy
    elif dy < 0:
        stepy, tdy, tmy = -1, -cell / dy, (y0 + iy * cell - py) / dy
    else:
        stepy, tdy, tmy = 0, math.inf, math.inf
    while True:
        texit = min(tmx, tmy)
        yield iy * nx + ix, texit
        if texit > t1:
            return
        if tmx < tmy:
            ix += stepx
            tmx += tdx
        else:
            iy += stepy
            tmy += tdy
        if not (0 <= ix < nx and 0 <= iy < ny):
            return


def first_hits(p, q, tmin, ea, eb, cell_start, cell_items, x0, y0, cell, nx, ny, eps):
    """First-hit parameter for every query (``inf`` when the query is clear)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    ea = np.asarray(ea, dtype=float)
    eb = np.asarray(eb, dtype=float)
    out = np.full(len(p), np.inf)
    gx1 = x0 + nx * cell
    gy1 = y0 + ny * cell
    for k in range(len(p)):
        px, py = p[k]
        dx, dy = q[k] - p[k]
        dd = dx * dx + dy * dy
        tm = float(tmin[k])
        t0, t1 = tm, 1.0
        skip = False
        for pc, dc, lo, hi in ((px, dx, x0, gx1), (py, dy, y0, gy1)):
            if abs(dc) > 1e-300:
                ta, tb = sorted(((lo - eps - pc) / dc, (hi + eps - pc) / dc))
                t0, t1 = max(t0, ta), min(t1, tb)
            elif pc < lo - eps or pc > hi + eps:
                skip = True
        if skip or t0 > t1:
            continue
        best = math.inf
        for c, texit in _cells_along(px, py, dx, dy, t0, t1, x0, y0, cell, nx, ny):
            items = cell_items[cell_start[c]:cell_start[c + 1]]
            if len(items):
                h = _edge_hits(px, py, dx, dy, dd, tm, ea[items], eb[items], eps)
                best = min(best, float(h.min()))
            if best <= texit:
                break
        out[k] = best
    return out


def nearest_edges(p, upper, ea, eb, cell_start, cell_items, prefix, x0, y0, cell, nx, ny, kmax):
    """Same contract as the compiled ring search; exact blockwise brute force."""
    p = np.asarray(p, dtype=float)
    m, n = len(p), len(ea)
    dist = np.empty(m)
    edge = np.full(m, -1, dtype=np.int64)
    par = np.zeros(m)
    ex = eb - ea
    ee = np.sum(ex * ex, axis=1)
    safe = np.where(ee > 0, ee, 1.0)
    step = max(1, 4_000_000 // max(n, 1))
    for s in range(0, m, step):
        P = p[s:s + step, None, :]
        u = np.clip(np.sum((P - ea) * ex, axis=-1) / safe, 0.0, 1.0)
        u = np.where(ee > 0, u, 0.0)
        d2 = np.sum((ea + u[..., None] * ex - P) ** 2, axis=-1)
        i = np.argmin(d2, axis=1)
        r = np.arange(len(i))
        dist[s:s + step] = np.sqrt(d2[r, i])
        edge[s:s + step] = i
        par[s:s + step] = u[r, i]
    up = np.asarray(upper, dtype=float)
    worse = dist > up
    edge[worse] = -1
    dist[worse] = up[worse]
    return dist, edge, par, np.ones(m, dtype=np.uint8)
