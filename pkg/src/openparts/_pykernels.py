"""Pure numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Signatures and floating point expression order match the Cython module so the
two backends agree bit for bit.
"""
from __future__ import annotations

import numpy as np

_PAIR_BUDGET = 1 << 21


def _watertight(v0, v1, v2, o, d):
    """Vectorized watertight ray/triangle test; ``-inf`` marks a miss."""
    n = o.shape[0]
    rows = np.arange(n)
    ad = np.abs(d)
    kz = np.where((ad[:, 0] >= ad[:, 1]) & (ad[:, 0] >= ad[:, 2]), 0,
                  np.where(ad[:, 1] >= ad[:, 2], 1, 2))
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    neg = d[rows, kz] < 0.0
    kx, ky = np.where(neg, ky, kx), np.where(neg, kx, ky)
    dz = d[rows, kz]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = d[rows, kx] / dz
        sy = d[rows, ky] / dz
        sz = 1.0 / dz
    a = v0 - o
    b = v1 - o
    c = v2 - o
    ax = a[rows, kx] - sx * a[rows, kz]
    ay = a[rows, ky] - sy * a[rows, kz]
    bx = b[rows, kx] - sx * b[rows, kz]
    by = b[rows, ky] - sy * b[rows, kz]
    cx = c[rows, kx] - sx * c[rows, kz]
    cy = c[rows, ky] - sy * c[rows, kz]
    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax
    miss = ((u < 0.0) | (v < 0.0) | (w < 0.0)) & ((u > 0.0) | (v > 0.0) | (w > 0.0))
    det = u + v + w
    miss |= det == 0.0
    az = sz * a[rows, kz]
    bz = sz * b[rows, kz]
    cz = sz * c[rows, kz]
    t = u * az + v * bz + w * cz
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t / det
    t[miss] = -np.inf
    return t


def _slab(lo, hi, o, d):
    """Conservative ray/box overlap for every (ray, box) pair; returns entry and exit."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        tn = (lo[None, :, :] - o[:, None, :]) * inv[:, None, :]
        tf = (hi[None, :, :] - o[:, None, :]) * inv[:, None, :]
        near = np.minimum(tn, tf)
        far = np.maximum(tn, tf)
        # nan on flat axes is replaced below
        far = far + np.abs(far) * 1e-12 + 1e-300
        near = near - np.abs(near) * 1e-12
    flat = d[:, None, :] == 0.0
    inside = (o[:, None, :] >= lo[None, :, :]) & (o[:, None, :] <= hi[None, :, :])
    near = np.where(flat, np.where(inside, -np.inf, np.inf), near)
    far = np.where(flat, np.where(inside, np.inf, -np.inf), far)
    return near.max(axis=2), far.min(axis=2)


def ray_cast_batch(node_lo, node_hi, node_left, node_right, node_start, node_count,
                   tri_order, v0, v1, v2, origins, dirs, t_min, t_max):
    n = origins.shape[0]
    out_t = np.full(n, np.inf)
    out_id = np.full(n, -1, dtype=np.int64)
    leaves = np.flatnonzero(node_left < 0)
    lo = node_lo[leaves]
    hi = node_hi[leaves]
    chunk = max(1, _PAIR_BUDGET // max(1, len(leaves)))
    for s in range(0, n, chunk):
        o = origins[s:s + chunk]
        d = dirs[s:s + chunk]
        tmin = t_min[s:s + chunk]
        tmax = t_max[s:s + chunk]
        near, far = _slab(lo, hi, o, d)
        ok = (np.maximum(near, tmin[:, None]) <= np.minimum(far, tmax[:, None]))
        ray_i, leaf_i = np.nonzero(ok)
        if ray_i.size == 0:
            continue
        counts = node_count[leaves[leaf_i]]
        starts = node_start[leaves[leaf_i]]
        ray_i = np.repeat(ray_i, counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        tri = tri_order[np.repeat(starts, counts) + offs]
        t = _watertight(v0[tri], v1[tri], v2[tri], o[ray_i], d[ray_i])
        valid = (t >= tmin[ray_i]) & (t <= tmax[ray_i])
        if not valid.any():
            continue
        ray_i, tri, t = ray_i[valid], tri[valid], t[valid]
        order = np.lexsort((tri, t, ray_i))
        ray_i, tri, t = ray_i[order], tri[order], t[order]
        first = np.ones(ray_i.size, dtype=bool)
        first[1:] = ray_i[1:] != ray_i[:-1]
        out_t[s + ray_i[first]] = t[first]
        out_id[s + ray_i[first]] = tri[first]
    return out_t, out_id


def fps_buckets(pts, orig, b_start, b_end, b_lo, b_hi, first, m):
    n = pts.shape[0]
    nb = b_start.shape[0]
    mind = np.full(n, np.inf)
    bmax = np.full(nb, np.inf)
    barg = b_start.astype(np.int64).copy()
    out = np.empty(m, dtype=np.int64)
    bucket_of = np.repeat(np.arange(nb), b_end - b_start)
    sel = int(first)
    for it in range(m):
        if it > 0:
            live = np.flatnonzero(barg >= 0)
            vals = bmax[live]
            cand = live[vals == vals.max()]
            sel = int(barg[cand[np.argmin(orig[barg[cand]])]])
        out[it] = orig[sel]
        s = pts[sel]
        mind[sel] = -1.0
        gap = np.maximum(np.maximum(b_lo - s, s - b_hi), 0.0)
        box2 = (gap[:, 0] * gap[:, 0] + gap[:, 1] * gap[:, 1]) + gap[:, 2] * gap[:, 2]
        touch = (barg >= 0) & (box2 < bmax)
        touch[bucket_of[sel]] = True
        tb = np.flatnonzero(touch)
        idx = np.concatenate([np.arange(b_start[b], b_end[b]) for b in tb])
        alive = mind[idx] >= 0.0
        live_idx = idx[alive]
        diff = pts[live_idx] - s
        d2 = (diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]) + diff[:, 2] * diff[:, 2]
        mind[live_idx] = np.minimum(mind[live_idx], d2)
        for b in tb:
            seg = mind[b_start[b]:b_end[b]]
            j = int(np.argmax(seg))
            if seg[j] < 0.0:
                bmax[b] = -1.0
                barg[b] = -1
            else:
                bmax[b] = seg[j]
                barg[b] = b_start[b] + j
    return out
