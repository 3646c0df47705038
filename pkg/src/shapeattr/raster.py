"""Z-buffered triangle rasterization kernels.

Both backends sample coverage at pixel centers ``(x + 0.5, y + 0.5)`` with an
inclusive edge test, interpolate depth perspective-correctly and resolve
equal depths in favour of the lower face index, so they produce the same
face-id buffer.
"""

import numpy as np

from . import _accel
from ._accel import njit

NEAR = 1e-3
_CHUNK = 1 << 22


@njit(cache=True, nogil=True)
def _rasterize_nb(sx, sy, sz, faces, width, height):
    face_id = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    zbuf = np.full((height, width), np.inf)
    for t in range(faces.shape[0]):
        i0 = faces[t, 0]
        i1 = faces[t, 1]
        i2 = faces[t, 2]
        z0 = sz[i0]
        z1 = sz[i1]
        z2 = sz[i2]
        if z0 <= NEAR or z1 <= NEAR or z2 <= NEAR:
            continue
        x0 = sx[i0]
        x1 = sx[i1]
        x2 = sx[i2]
        y0 = sy[i0]
        y1 = sy[i1]
        y2 = sy[i2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if abs(area) < 1e-14:
            continue
        lo_x = min(max(min(x0, min(x1, x2)) - 0.5, -1.0), width + 1.0)
        hi_x = min(max(max(x0, max(x1, x2)) - 0.5, -1.0), width + 1.0)
        lo_y = min(max(min(y0, min(y1, y2)) - 0.5, -1.0), height + 1.0)
        hi_y = min(max(max(y0, max(y1, y2)) - 0.5, -1.0), height + 1.0)
        xmin = max(0, int(np.ceil(lo_x)))
        xmax = min(width - 1, int(np.floor(hi_x)))
        ymin = max(0, int(np.ceil(lo_y)))
        ymax = min(height - 1, int(np.floor(hi_y)))
        for py in range(ymin, ymax + 1):
            cy = py + 0.5
            for px in range(xmin, xmax + 1):
                cx = px + 0.5
                w0 = ((x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)) / area
                w1 = ((x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)) / area
                w2 = ((x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)) / area
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                q0 = w0 / z0
                q1 = w1 / z1
                q2 = w2 / z2
                d = 1.0 / (q0 + q1 + q2)
                if d < zbuf[py, px]:
                    zbuf[py, px] = d
                    face_id[py, px] = t
                    bary[py, px, 0] = q0 * d
                    bary[py, px, 1] = q1 * d
                    bary[py, px, 2] = q2 * d
    return face_id, bary, zbuf


def _rasterize_np(sx, sy, sz, faces, width, height):
    face_id = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    zbuf = np.full((height, width), np.inf)
    flat_id = face_id.reshape(-1)
    flat_bary = bary.reshape(-1, 3)
    flat_z = zbuf.reshape(-1)

    X = sx[faces]
    Y = sy[faces]
    Z = sz[faces]
    x0, x1, x2 = X[:, 0], X[:, 1], X[:, 2]
    y0, y1, y2 = Y[:, 0], Y[:, 1], Y[:, 2]
    area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    ok = (Z > NEAR).all(axis=1) & (np.abs(area) >= 1e-14)

    lo_x = np.clip(X.min(axis=1) - 0.5, -1.0, width + 1.0)
    hi_x = np.clip(X.max(axis=1) - 0.5, -1.0, width + 1.0)
    lo_y = np.clip(Y.min(axis=1) - 0.5, -1.0, height + 1.0)
    hi_y = np.clip(Y.max(axis=1) - 0.5, -1.0, height + 1.0)
    xmin = np.maximum(0, np.ceil(lo_x).astype(np.int64))
    xmax = np.minimum(width - 1, np.floor(hi_x).astype(np.int64))
    ymin = np.maximum(0, np.ceil(lo_y).astype(np.int64))
    ymax = np.minimum(height - 1, np.floor(hi_y).astype(np.int64))
    nx = np.maximum(xmax - xmin + 1, 0)
    ny = np.maximum(ymax - ymin + 1, 0)
    counts = np.where(ok, nx * ny, 0)

    tris = np.flatnonzero(counts)
    # contiguous triangle ranges with bounded candidate counts, in face order
    csum = np.cumsum(counts[tris])
    start = 0
    while start < len(tris):
        base = csum[start - 1] if start else 0
        stop = int(np.searchsorted(csum, base + _CHUNK, side="right"))
        stop = max(stop, start + 1)
        t_sel = tris[start:stop]
        c = counts[t_sel]
        t = np.repeat(t_sel, c)
        offs = np.repeat(np.cumsum(c) - c, c)
        k = np.arange(len(t)) - offs
        px = xmin[t] + k % nx[t]
        py = ymin[t] + k // nx[t]
        cx = px + 0.5
        cy = py + 0.5
        a0, a1, a2 = x0[t], x1[t], x2[t]
        b0, b1, b2 = y0[t], y1[t], y2[t]
        ar = area[t]
        w0 = ((a2 - a1) * (cy - b1) - (b2 - b1) * (cx - a1)) / ar
        w1 = ((a0 - a2) * (cy - b2) - (b0 - b2) * (cx - a2)) / ar
        w2 = ((a1 - a0) * (cy - b0) - (b1 - b0) * (cx - a0)) / ar
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        t, w0, w1, w2 = t[inside], w0[inside], w1[inside], w2[inside]
        pix = (py * width + px)[inside]
        q0 = w0 / Z[t, 0]
        q1 = w1 / Z[t, 1]
        q2 = w2 / Z[t, 2]
        d = 1.0 / (q0 + q1 + q2)
        order = np.lexsort((t, d, pix))
        pix_s = pix[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = pix_s[1:] != pix_s[:-1]
        win = order[first]
        wpix = pix[win]
        better = d[win] < flat_z[wpix]
        win, wpix = win[better], wpix[better]
        flat_z[wpix] = d[win]
        flat_id[wpix] = t[win]
        flat_bary[wpix, 0] = q0[win] * d[win]
        flat_bary[wpix, 1] = q1[win] * d[win]
        flat_bary[wpix, 2] = q2[win] * d[win]
        start = stop
    return face_id, bary, zbuf


def rasterize(sx, sy, sz, faces, width, height, backend=None):
    """Rasterize projected triangles.

    ``sx``/``sy`` are pixel coordinates (x right, y down) and ``sz`` the
    positive view depth of every vertex.  Returns ``(face_id, bary, depth)``
    where ``face_id`` is -1 on uncovered pixels and ``bary`` holds
    perspective-correct barycentric weights.
    """
    sx = np.ascontiguousarray(sx, dtype=np.float64)
    sy = np.ascontiguousarray(sy, dtype=np.float64)
    sz = np.ascontiguousarray(sz, dtype=np.float64)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    use_numba = _accel.USE_NUMBA if backend is None else backend == "numba"
    if use_numba:
        return _rasterize_nb(sx, sy, sz, faces, int(width), int(height))
    return _rasterize_np(sx, sy, sz, faces, int(width), int(height))
