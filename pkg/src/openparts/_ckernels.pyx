# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: BVH ray traversal and bucketed farthest point sampling.

Both kernels mirror ``openparts._pykernels`` operation for operation so the two
backends return bit-identical results. Keep the floating point expression
order in sync when editing either file.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()

DEF STACK_SIZE = 128


cdef inline double _watertight(const double[:, ::1] v0, const double[:, ::1] v1,
                               const double[:, ::1] v2, Py_ssize_t tri,
                               double ox, double oy, double oz,
                               int kx, int ky, int kz,
                               double sx, double sy, double sz) noexcept nogil:
    """Return hit distance along the ray or -INFINITY on a miss."""
    cdef double o[3]
    cdef double a[3]
    cdef double b[3]
    cdef double c[3]
    cdef int k
    o[0] = ox
    o[1] = oy
    o[2] = oz
    for k in range(3):
        a[k] = v0[tri, k] - o[k]
        b[k] = v1[tri, k] - o[k]
        c[k] = v2[tri, k] - o[k]
    cdef double ax = a[kx] - sx * a[kz]
    cdef double ay = a[ky] - sy * a[kz]
    cdef double bx = b[kx] - sx * b[kz]
    cdef double by = b[ky] - sy * b[kz]
    cdef double cx = c[kx] - sx * c[kz]
    cdef double cy = c[ky] - sy * c[kz]
    cdef double u = cx * by - cy * bx
    cdef double v = ax * cy - ay * cx
    cdef double w = bx * ay - by * ax
    if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
        return -INFINITY
    cdef double det = u + v + w
    if det == 0.0:
        return -INFINITY
    cdef double az = sz * a[kz]
    cdef double bz = sz * b[kz]
    cdef double cz = sz * c[kz]
    cdef double t = u * az + v * bz + w * cz
    return t / det


cdef inline bint _box_hit(const double[:, ::1] lo, const double[:, ::1] hi, Py_ssize_t node,
                          double* o, double* d, double* inv,
                          double t0, double t1, double* t_entry) noexcept nogil:
    cdef int k
    cdef double tn, tf, tmp
    for k in range(3):
        if d[k] == 0.0:
            if o[k] < lo[node, k] or o[k] > hi[node, k]:
                return False
        else:
            tn = (lo[node, k] - o[k]) * inv[k]
            tf = (hi[node, k] - o[k]) * inv[k]
            if tn > tf:
                tmp = tn
                tn = tf
                tf = tmp
            # conservative widening, misses are never introduced by rounding
            tf = tf + fabs(tf) * 1e-12 + 1e-300
            tn = tn - fabs(tn) * 1e-12
            if tn > t0:
                t0 = tn
            if tf < t1:
                t1 = tf
            if t0 > t1:
                return False
    t_entry[0] = t0
    return True


def ray_cast_batch(const double[:, ::1] node_lo, const double[:, ::1] node_hi,
                   const long long[::1] node_left, const long long[::1] node_right,
                   const long long[::1] node_start, const long long[::1] node_count,
                   const long long[::1] tri_order,
                   const double[:, ::1] v0, const double[:, ::1] v1, const double[:, ::1] v2,
                   const double[:, ::1] origins, const double[:, ::1] dirs,
                   const double[::1] t_min, const double[::1] t_max):
    """Nearest hit per ray; returns ``(distance, triangle_id)`` with id -1 on a miss."""
    cdef Py_ssize_t n = origins.shape[0]
    out_t_arr = np.full(n, np.inf, dtype=np.float64)
    out_id_arr = np.full(n, -1, dtype=np.int64)
    cdef double[::1] out_t = out_t_arr
    cdef long long[::1] out_id = out_id_arr
    cdef long long stack[STACK_SIZE]
    cdef double o[3]
    cdef double d[3]
    cdef double inv[3]
    cdef Py_ssize_t r, i, node, tri, sp
    cdef int k, kx, ky, kz
    cdef double sx, sy, sz, best_t, t, te_l, te_r, te
    cdef long long best_id, left, right
    cdef bint hit_l, hit_r
    with nogil:
        for r in range(n):
            for k in range(3):
                o[k] = origins[r, k]
                d[k] = dirs[r, k]
                if d[k] != 0.0:
                    inv[k] = 1.0 / d[k]
                else:
                    inv[k] = INFINITY
            kz = 0
            if fabs(d[0]) >= fabs(d[1]) and fabs(d[0]) >= fabs(d[2]):
                kz = 0
            elif fabs(d[1]) >= fabs(d[2]):
                kz = 1
            else:
                kz = 2
            kx = (kz + 1) % 3
            ky = (kx + 1) % 3
            if d[kz] < 0.0:
                k = kx
                kx = ky
                ky = k
            sx = d[kx] / d[kz]
            sy = d[ky] / d[kz]
            sz = 1.0 / d[kz]
            best_t = t_max[r]
            best_id = -1
            if not _box_hit(node_lo, node_hi, 0, o, d, inv, t_min[r], best_t, &te):
                continue
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if not _box_hit(node_lo, node_hi, node, o, d, inv, t_min[r], best_t, &te):
                    continue
                left = node_left[node]
                if left < 0:
                    for i in range(node_start[node], node_start[node] + node_count[node]):
                        tri = tri_order[i]
                        t = _watertight(v0, v1, v2, tri, o[0], o[1], o[2], kx, ky, kz, sx, sy, sz)
                        if t >= t_min[r] and (t < best_t or (t == best_t and (best_id < 0 or tri < best_id))):
                            best_t = t
                            best_id = tri
                    continue
                right = node_right[node]
                hit_l = _box_hit(node_lo, node_hi, left, o, d, inv, t_min[r], best_t, &te_l)
                hit_r = _box_hit(node_lo, node_hi, right, o, d, inv, t_min[r], best_t, &te_r)
                if hit_l and hit_r:
                    # near child popped first
                    if te_l <= te_r:
                        stack[sp] = right
                        stack[sp + 1] = left
                    else:
                        stack[sp] = left
                        stack[sp + 1] = right
                    sp += 2
                elif hit_l:
                    stack[sp] = left
                    sp += 1
                elif hit_r:
                    stack[sp] = right
                    sp += 1
            if best_id >= 0:
                out_t[r] = best_t
                out_id[r] = best_id
    return out_t_arr, out_id_arr


def fps_buckets(const double[:, ::1] pts, const long long[::1] orig,
                const long long[::1] b_start, const long long[::1] b_end,
                const double[:, ::1] b_lo, const double[:, ::1] b_hi,
                Py_ssize_t first, Py_ssize_t m):
    """Exact farthest point sampling with bucket pruning.

    ``pts`` is sorted by bucket and, inside each bucket, by original index.
    Returns the original indices of the ``m`` selected points.
    """
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t nb = b_start.shape[0]
    mind_arr = np.full(n, np.inf, dtype=np.float64)
    bmax_arr = np.full(nb, np.inf, dtype=np.float64)
    barg_arr = np.asarray(b_start, dtype=np.int64).copy()
    out_arr = np.empty(m, dtype=np.int64)
    cdef double[::1] mind = mind_arr
    cdef double[::1] bmax = bmax_arr
    cdef long long[::1] barg = barg_arr
    cdef long long[::1] out = out_arr
    cdef Py_ssize_t it, b, i, sel, best_b
    cdef double sx, sy, sz, dx, dy, dz, d2, gap, box2, vmax
    cdef long long arg
    cdef int k
    with nogil:
        sel = first
        for it in range(m):
            if it > 0:
                best_b = -1
                for b in range(nb):
                    if barg[b] < 0:
                        continue
                    if best_b < 0 or bmax[b] > bmax[best_b] or (
                            bmax[b] == bmax[best_b] and orig[barg[b]] < orig[barg[best_b]]):
                        best_b = b
                sel = barg[best_b]
            out[it] = orig[sel]
            sx = pts[sel, 0]
            sy = pts[sel, 1]
            sz = pts[sel, 2]
            mind[sel] = -1.0
            for b in range(nb):
                if barg[b] < 0:
                    continue
                box2 = 0.0
                for k in range(3):
                    if k == 0:
                        dx = sx
                    elif k == 1:
                        dx = sy
                    else:
                        dx = sz
                    if dx < b_lo[b, k]:
                        gap = b_lo[b, k] - dx
                    elif dx > b_hi[b, k]:
                        gap = dx - b_hi[b, k]
                    else:
                        gap = 0.0
                    box2 = box2 + gap * gap
                if box2 >= bmax[b] and not (b_start[b] <= sel < b_end[b]):
                    continue
                vmax = -1.0
                arg = -1
                for i in range(b_start[b], b_end[b]):
                    if mind[i] >= 0.0:
                        dx = pts[i, 0] - sx
                        dy = pts[i, 1] - sy
                        dz = pts[i, 2] - sz
                        d2 = (dx * dx + dy * dy) + dz * dz
                        if d2 < mind[i]:
                            mind[i] = d2
                        if mind[i] > vmax:
                            vmax = mind[i]
                            arg = i
                bmax[b] = vmax
                barg[b] = arg
    return out_arr
