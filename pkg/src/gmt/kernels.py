"""Hot-loop backend selection and the bucketed segment soup.

The compiled extension ``gmt._kernels`` is used when importable; otherwise
the NumPy fallback in ``gmt._kernels_py`` is selected.  Setting the
environment variable ``GMT_PURE_PYTHON=1`` forces the fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("GMT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on build
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "compiled"


def backends():
    """Available kernel implementations keyed by name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as compiled  # type: ignore[attr-defined]

        out["compiled"] = compiled
    except ImportError:  # pragma: no cover
        pass
    return out


def build_buckets(ea, eb, eps, target_per_cell=4.0, max_cells=1 << 20):
    """CSR bucket grid over planar edges ``ea[i] -> eb[i]``.

    Each edge is registered in every cell its eps-inflated bounding box
    touches, so a grazing hit is always found from the cell holding it.
    """
    ea = np.ascontiguousarray(ea, dtype=float)
    eb = np.ascontiguousarray(eb, dtype=float)
    lo = np.minimum(ea, eb).min(axis=0) - 2 * eps
    hi = np.maximum(ea, eb).max(axis=0) + 2 * eps
    span = np.maximum(hi - lo, 1e-12)
    n = len(ea)
    lengths = np.linalg.norm(eb - ea, axis=1)
    if n <= 32:
        cell = float(span.max()) * (1 + 1e-9)
    else:
        med = float(np.median(lengths))
        cell = max(med * target_per_cell / 2, float(np.sqrt(span[0] * span[1] / max_cells)))
        cell = max(cell, float(span.max()) / 4096)
    nx = int(np.ceil(span[0] / cell)) or 1
    ny = int(np.ceil(span[1] / cell)) or 1
    bmin = np.minimum(ea, eb) - eps
    bmax = np.maximum(ea, eb) + eps
    i0 = np.clip(np.floor((bmin - lo) / cell).astype(np.int64), 0, [nx - 1, ny - 1])
    i1 = np.clip(np.floor((bmax - lo) / cell).astype(np.int64), 0, [nx - 1, ny - 1])
    wx = i1[:, 0] - i0[:, 0] + 1
    wy = i1[:, 1] - i0[:, 1] + 1
    counts = wx * wy
    edge_ids = np.repeat(np.arange(n, dtype=np.int64), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    cx = i0[edge_ids, 0] + offs % wx[edge_ids]
    cy = i0[edge_ids, 1] + offs // wx[edge_ids]
    cid = cy * nx + cx
    order = np.argsort(cid, kind="stable")
    items = edge_ids[order]
    start = np.zeros(nx * ny + 1, dtype=np.int64)
    np.add.at(start, cid + 1, 1)
    start = np.cumsum(start)
    per_cell = np.diff(start).reshape(ny, nx).T
    prefix = np.zeros((nx + 1, ny + 1), dtype=np.int_)
    prefix[1:, 1:] = np.cumsum(np.cumsum(per_cell, axis=0), axis=1)
    return {
        "prefix": np.ascontiguousarray(prefix),
        "cell_start": np.ascontiguousarray(start, dtype=np.int_),
        "cell_items": np.ascontiguousarray(items, dtype=np.int_),
        "x0": float(lo[0]),
        "y0": float(lo[1]),
        "cell": float(cell),
        "nx": nx,
        "ny": ny,
    }


class SegmentSoup:
    """Planar edges with a bucket index answering batched first-hit queries."""

    def __init__(self, ea, eb, eps):
        self.ea = np.ascontiguousarray(ea, dtype=float)
        self.eb = np.ascontiguousarray(eb, dtype=float)
        self.eps = float(eps)
        self.grid = build_buckets(self.ea, self.eb, self.eps)

    def __len__(self):
        return len(self.ea)

    def first_hits(self, p, q, tmin=None, impl=None):
        p = np.ascontiguousarray(np.atleast_2d(p), dtype=float)
        q = np.ascontiguousarray(np.atleast_2d(q), dtype=float)
        if tmin is None:
            tmin = np.zeros(len(p))
        tmin = np.array(np.broadcast_to(tmin, (len(p),)), dtype=float)
        if len(p) == 0 or len(self.ea) == 0:
            return np.full(len(p), np.inf)
        g = self.grid
        mod = impl or _impl
        return mod.first_hits(p, q, tmin, self.ea, self.eb, g["cell_start"], g["cell_items"],
                              g["x0"], g["y0"], g["cell"], g["nx"], g["ny"], self.eps)

    def nearest(self, p, upper=None, kmax=1 << 20, impl=None):
        """Exact nearest edge per point: (dist, edge index, edge parameter, certified).

        Rows the ring search could not certify within ``kmax`` rings keep their
        best candidate with ``certified == 0``; the caller resolves them.
        """
        p = np.ascontiguousarray(np.atleast_2d(p), dtype=float)
        if upper is None:
            upper = np.full(len(p), np.inf)
        upper = np.array(np.broadcast_to(upper, (len(p),)), dtype=float)
        g = self.grid
        mod = impl or _impl
        return mod.nearest_edges(p, upper, self.ea, self.eb, g["cell_start"], g["cell_items"],
                                 g["prefix"], g["x0"], g["y0"], g["cell"], g["nx"], g["ny"], int(kmax))
