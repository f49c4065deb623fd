# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled first-hit kernel for planar segment soups.

Queries are segments ``p + t (q - p)``, ``t in [tmin, 1]``.  Edges live in a
uniform bucket grid (CSR layout built by :func:`gmt.kernels.build_buckets`);
each query walks the grid cells it crosses in order and stops as soon as the
best hit precedes the exit of the current cell.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs, INFINITY

cnp.import_array()


cdef inline double _edge_hit(double px, double py, double dx, double dy,
                             double dd, double tmin,
                             double ax, double ay, double bx, double by,
                             double eps) nogil:
    """Smallest admissible query parameter for one edge, or INFINITY."""
    cdef double ex = bx - ax, ey = by - ay
    cdef double den = dx * ey - dy * ex
    cdef double wx = ax - px, wy = ay - py
    cdef double best = INFINITY
    cdef double t, u, ee, cx, cy, dist2, eps2 = eps * eps
    ee = ex * ex + ey * ey
    if fabs(den) > 1e-300:
        t = (wx * ey - wy * ex) / den
        u = (wx * dy - wy * dx) / den
        if t >= tmin and t <= 1.0 and u >= 0.0 and u <= 1.0:
            best = t
    # grazing: edge endpoints within eps of the query
    if dd > 0.0:
        t = (wx * dx + wy * dy) / dd
        if t >= tmin and t <= 1.0 and t < best:
            cx = px + t * dx - ax
            cy = py + t * dy - ay
            if cx * cx + cy * cy <= eps2:
                best = t
        t = ((bx - px) * dx + (by - py) * dy) / dd
        if t >= tmin and t <= 1.0 and t < best:
            cx = px + t * dx - bx
            cy = py + t * dy - by
            if cx * cx + cy * cy <= eps2:
                best = t
    # query endpoints within eps of the edge
    if ee > 0.0:
        if tmin <= 0.0 and best > 0.0:
            u = ((px - ax) * ex + (py - ay) * ey) / ee
            u = 0.0 if u < 0.0 else (1.0 if u > 1.0 else u)
            cx = ax + u * ex - px
            cy = ay + u * ey - py
            if cx * cx + cy * cy <= eps2:
                best = 0.0
        if best > 1.0:
            u = ((px + dx - ax) * ex + (py + dy - ay) * ey) / ee
            u = 0.0 if u < 0.0 else (1.0 if u > 1.0 else u)
            cx = ax + u * ex - px - dx
            cy = ay + u * ey - py - dy
            if cx * cx + cy * cy <= eps2:
                best = 1.0
    return best


def first_hits(const double[:, ::1] p, const double[:, ::1] q, const double[::1] tmin,
               const double[:, ::1] ea, const double[:, ::1] eb,
               const long[::1] cell_start, const long[::1] cell_items,
               double x0, double y0, double cell, long nx, long ny,
               double eps):
    """First-hit parameter for every query (``inf`` when the query is clear)."""
    cdef Py_ssize_t m = p.shape[0]
    out_arr = np.full(m, np.inf)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k
    cdef long ix, iy, stepx, stepy, c, s, e, idx
    cdef double px, py, dx, dy, dd, t0, t1, ta, tb, best, h
    cdef double tmaxx, tmaxy, tdx, tdy, texit, gx1, gy1, tm
    gx1 = x0 + nx * cell
    gy1 = y0 + ny * cell
    with nogil:
        for k in range(m):
            px = p[k, 0]
            py = p[k, 1]
            dx = q[k, 0] - px
            dy = q[k, 1] - py
            dd = dx * dx + dy * dy
            tm = tmin[k]
            # clip query against the grid box (slab method)
            t0 = tm
            t1 = 1.0
            if fabs(dx) > 1e-300:
                ta = (x0 - eps - px) / dx
                tb = (gx1 + eps - px) / dx
                if ta > tb:
                    ta, tb = tb, ta
                t0 = ta if ta > t0 else t0
                t1 = tb if tb < t1 else t1
            elif px < x0 - eps or px > gx1 + eps:
                continue
            if fabs(dy) > 1e-300:
                ta = (y0 - eps - py) / dy
                tb = (gy1 + eps - py) / dy
                if ta > tb:
                    ta, tb = tb, ta
                t0 = ta if ta > t0 else t0
                t1 = tb if tb < t1 else t1
            elif py < y0 - eps or py > gy1 + eps:
                continue
            if t0 > t1:
                continue
            h = (px + t0 * dx - x0) / cell
            ix = <long>floor(h)
            h = (py + t0 * dy - y0) / cell
            iy = <long>floor(h)
            ix = 0 if ix < 0 else (nx - 1 if ix >= nx else ix)
            iy = 0 if iy < 0 else (ny - 1 if iy >= ny else iy)
            if dx > 0:
                stepx = 1
                tdx = cell / dx
                tmaxx = (x0 + (ix + 1) * cell - px) / dx
            elif dx < 0:
                stepx = -1
                tdx = -cell / dx
                tmaxx = (x0 + ix * cell - px) / dx
            else:
                stepx = 0
                tdx = INFINITY
                tmaxx = INFINITY
            if dy > 0:
                stepy = 1
                tdy = cell / dy
                tmaxy = (y0 + (iy + 1) * cell - py) / dy
            elif dy < 0:
                stepy = -1
                tdy = -cell / dy
                tmaxy = (y0 + iy * cell - py) / dy
            else:
                stepy = 0
                tdy = INFINITY
                tmaxy = INFINITY
            best = INFINITY
            while True:
                c = iy * nx + ix
                s = cell_start[c]
                e = cell_start[c + 1]
                for idx in range(s, e):
                    h = _edge_hit(px, py, dx, dy, dd, tm,
                                  ea[cell_items[idx], 0], ea[cell_items[idx], 1],
                                  eb[cell_items[idx], 0], eb[cell_items[idx], 1],
                                  eps)
                    if h < best:
                        best = h
                texit = tmaxx if tmaxx < tmaxy else tmaxy
                if best <= texit or texit > t1:
                    break
                if tmaxx < tmaxy:
                    ix += stepx
                    tmaxx += tdx
                else:
                    iy += stepy
                    tmaxy += tdy
                if ix < 0 or ix >= nx or iy < 0 or iy >= ny:
                    break
            out[k] = best
    return out_arr


cdef inline double _seg_d2(double px, double py, double ax, double ay,
                           double bx, double by, double* u_out) nogil:
    cdef double ex = bx - ax, ey = by - ay
    cdef double ee = ex * ex + ey * ey
    cdef double u = 0.0
    if ee > 0.0:
        u = ((px - ax) * ex + (py - ay) * ey) / ee
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
    u_out[0] = u
    cdef double cx = ax + u * ex - px, cy = ay + u * ey - py
    return cx * cx + cy * cy


cdef inline long _rect(const long[:, ::1] P, long i0, long i1, long j0, long j1) noexcept nogil:
    return P[i1 + 1, j1 + 1] - P[i0, j1 + 1] - P[i1 + 1, j0] + P[i0, j0]


cdef inline double _box_d2(double px, double py, double xa, double xb,
                           double ya, double yb) noexcept nogil:
    cdef double dx = 0.0, dy = 0.0
    if px < xa:
        dx = xa - px
    elif px > xb:
        dx = px - xb
    if py < ya:
        dy = ya - py
    elif py > yb:
        dy = py - yb
    return dx * dx + dy * dy


cdef void _scan(const long[:, ::1] P, long i0, long i1, long j0, long j1,
                double px, double py, const double[:, ::1] ea, const double[:, ::1] eb,
                const long[::1] cell_start, const long[::1] cell_items, long nx,
                double x0, double y0, double cell,
                double* best2, long* bestE, double* bu) noexcept nogil:
    """Visit the nonempty cells of a one-cell-thick strip by bisection.

    Sub-strips that are empty or farther than the current best are pruned.
    """
    cdef long lo_s[128]
    cdef long hi_s[128]
    cdef long top = 0, lo, hi, mid, c, it, e
    cdef bint horiz = j0 == j1
    cdef double d2, u
    if horiz:
        lo_s[0] = i0
        hi_s[0] = i1
    else:
        lo_s[0] = j0
        hi_s[0] = j1
    top = 1
    while top > 0:
        top -= 1
        lo = lo_s[top]
        hi = hi_s[top]
        if horiz:
            if _rect(P, lo, hi, j0, j0) == 0:
                continue
            if _box_d2(px, py, x0 + lo * cell, x0 + (hi + 1) * cell,
                       y0 + j0 * cell, y0 + (j0 + 1) * cell) >= best2[0]:
                continue
        else:
            if _rect(P, i0, i0, lo, hi) == 0:
                continue
            if _box_d2(px, py, x0 + i0 * cell, x0 + (i0 + 1) * cell,
                       y0 + lo * cell, y0 + (hi + 1) * cell) >= best2[0]:
                continue
        if lo == hi:
            if horiz:
                c = j0 * nx + lo
            else:
                c = lo * nx + i0
            for it in range(cell_start[c], cell_start[c + 1]):
                e = cell_items[it]
                d2 = _seg_d2(px, py, ea[e, 0], ea[e, 1], eb[e, 0], eb[e, 1], &u)
                if d2 < best2[0]:
                    best2[0] = d2
                    bestE[0] = e
                    bu[0] = u
            continue
        mid = (lo + hi) // 2
        lo_s[top] = mid + 1
        hi_s[top] = hi
        lo_s[top + 1] = lo
        hi_s[top + 1] = mid
        top += 2


def nearest_edges(const double[:, ::1] p, const double[::1] upper,
                  const double[:, ::1] ea, const double[:, ::1] eb,
                  const long[::1] cell_start, const long[::1] cell_items,
                  const long[:, ::1] prefix,
                  double x0, double y0, double cell, long nx, long ny, long kmax):
    """Exact nearest edge by square-ring search over the bucket grid.

    ``prefix`` holds 2-D prefix sums of the cell counts so empty strips of a
    ring are skipped in O(1). ``upper`` is a known upper bound on the answer.
    Returns (dist, edge, param, certified); uncertified rows stopped at ring
    ``kmax``.
    """
    cdef Py_ssize_t m = p.shape[0]
    dist_a = np.empty(m, dtype=np.float64)
    edge_a = np.full(m, -1, dtype=np.int64)
    par_a = np.zeros(m, dtype=np.float64)
    cert_a = np.zeros(m, dtype=np.uint8)
    cdef double[::1] dist = dist_a
    cdef long long[::1] edge = edge_a
    cdef double[::1] par = par_a
    cdef unsigned char[::1] cert = cert_a
    cdef Py_ssize_t k
    cdef long ci, cj, ring, a0, a1, b0, b1, jj, ii
    cdef double px, py, best2, bu, lim
    cdef long bestE
    with nogil:
        for k in range(m):
            px = p[k, 0]
            py = p[k, 1]
            ci = <long>floor((px - x0) / cell)
            cj = <long>floor((py - y0) / cell)
            if ci < 0:
                ci = 0
            elif ci > nx - 1:
                ci = nx - 1
            if cj < 0:
                cj = 0
            elif cj > ny - 1:
                cj = ny - 1
            best2 = upper[k] * upper[k]
            bestE = -1
            bu = 0.0
            ring = 0
            while True:
                a0 = ci - ring
                a1 = ci + ring
                if a0 < 0:
                    a0 = 0
                if a1 > nx - 1:
                    a1 = nx - 1
                jj = cj - ring
                if 0 <= jj < ny:
                    _scan(prefix, a0, a1, jj, jj, px, py, ea, eb, cell_start,
                          cell_items, nx, x0, y0, cell, &best2, &bestE, &bu)
                jj = cj + ring
                if ring > 0 and 0 <= jj < ny:
                    _scan(prefix, a0, a1, jj, jj, px, py, ea, eb, cell_start,
                          cell_items, nx, x0, y0, cell, &best2, &bestE, &bu)
                b0 = cj - ring + 1
                b1 = cj + ring - 1
                if b0 < 0:
                    b0 = 0
                if b1 > ny - 1:
                    b1 = ny - 1
                if ring > 0 and b0 <= b1:
                    ii = ci - ring
                    if 0 <= ii < nx:
                        _scan(prefix, ii, ii, b0, b1, px, py, ea, eb, cell_start,
                              cell_items, nx, x0, y0, cell, &best2, &bestE, &bu)
                    ii = ci + ring
                    if 0 <= ii < nx:
                        _scan(prefix, ii, ii, b0, b1, px, py, ea, eb, cell_start,
                              cell_items, nx, x0, y0, cell, &best2, &bestE, &bu)
                lim = ring * cell
                if lim * lim >= best2 and bestE >= 0:
                    cert[k] = 1
                    break
                if ring > nx + ny:
                    cert[k] = 1 if bestE >= 0 else 0
                    break
                if ring >= kmax:
                    break
                ring += 1
            dist[k] = best2 ** 0.5
            edge[k] = bestE
            par[k] = bu
    return dist_a, edge_a, par_a, cert_a
