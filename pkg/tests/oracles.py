"""Independent reference implementations used only by the tests.

None of these share code with the package: ray casting uses the
Moller-Trumbore test instead of the watertight one, FPS is a plain double
loop, and the transport oracle enumerates plans on a grid.
"""
from __future__ import annotations

import functools
import itertools
import math

import numpy as np
from scipy.optimize import linprog


def moller_trumbore(origin, direction, a, b, c, eps=1e-14):
    """Two-sided ray/triangle distances for every triangle (inf on a miss)."""
    e1 = b - a
    e2 = c - a
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    out = np.full(len(a), np.inf)
    ok = np.abs(det) > eps
    inv = np.zeros_like(det)
    inv[ok] = 1.0 / det[ok]
    s = origin - a
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ direction) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0)
    out[hit] = t[hit]
    return out


def nearest_hit(mesh, origin, direction, t_min=0.0, t_max=math.inf):
    a, b, c = mesh.corners()
    t = moller_trumbore(np.asarray(origin, float), np.asarray(direction, float), a, b, c)
    t[(t < t_min) | (t > t_max)] = np.inf
    k = int(np.argmin(t))
    return (t[k], k) if np.isfinite(t[k]) else (math.inf, -1)


def fps_reference(points, m):
    """Greedy max-min selection, written as literally as possible."""
    pts = [tuple(map(float, p)) for p in points]
    n = len(pts)
    cx = sum(p[0] for p in pts) / n
    cy = sum(p[1] for p in pts) / n
    cz = sum(p[2] for p in pts) / n

    def d2(p, q):
        return (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2

    # exact comparison on squared distances, lowest index on ties
    first = max(range(n), key=lambda i: (d2(pts[i], (cx, cy, cz)), -i))
    chosen = [first]
    mind = [d2(p, pts[first]) for p in pts]
    for _ in range(m - 1):
        best = None
        for i in range(n):
            if i in chosen:
                continue
            if best is None or mind[i] > mind[best]:
                best = i
        chosen.append(best)
        for i in range(n):
            mind[i] = min(mind[i], d2(pts[i], pts[best]))
    return chosen


def exhaustive_match_count(pred_sets, pred_labels, gt_sets, gt_labels, areas, threshold):
    """Maximum number of label-consistent pairs with IoU >= threshold (optimal assignment)."""
    def iou(p, g):
        inter = sum(areas[t] for t in p & g)
        union = sum(areas[t] for t in p | g)
        return inter / union if union > 0 else 0.0

    ok = [[pred_labels[i] == gt_labels[j] and iou(pred_sets[i], gt_sets[j]) >= threshold
           for j in range(len(gt_sets))] for i in range(len(pred_sets))]
    @functools.lru_cache(maxsize=None)
    def best(i, used):
        # pred i either stays unmatched or takes any free compatible gt
        if i == len(pred_sets):
            return 0
        out = best(i + 1, used)
        for j in range(len(gt_sets)):
            if ok[i][j] and not used >> j & 1:
                out = max(out, 1 + best(i + 1, used | 1 << j))
        return out

    return best(0, 0)


def box_volume(lo, hi):
    return float(np.prod(np.maximum(np.subtract(hi, lo), 0.0)))


def giou_reference(alo, ahi, blo, bhi):
    va, vb = box_volume(alo, ahi), box_volume(blo, bhi)
    inter = box_volume(np.maximum(alo, blo), np.minimum(ahi, bhi))
    union = va + vb - inter
    hull = box_volume(np.minimum(alo, blo), np.maximum(ahi, bhi))
    return inter / union - (hull - union) / hull


def transport_lp(cost, supply, demand):
    """Exact optimal transport cost by linear programming."""
    n, m = cost.shape
    a_eq = []
    b_eq = []
    for i in range(n):
        row = np.zeros((n, m))
        row[i, :] = 1
        a_eq.append(row.ravel())
        b_eq.append(supply[i])
    for j in range(m):
        col = np.zeros((n, m))
        col[:, j] = 1
        a_eq.append(col.ravel())
        b_eq.append(demand[j])
    res = linprog(cost.ravel(), A_eq=np.array(a_eq), b_eq=np.array(b_eq), bounds=(0, None), method="highs")
    return res.fun


def transport_grid_2x2(cost, step=0.05):
    """Brute force over transport plans for two items per side plus one dummy each.

    Both sides carry masses (1, 1, 2). The plan has four free entries; three
    are enumerated on a grid and the fourth, on which the objective is
    linear, is tried at both ends of its feasible interval. Integral masses
    make every vertex of the polytope integral, so the grid contains the
    optimum whenever ``1 / step`` is an integer.
    """
    supply = np.array([1.0, 1.0, 2.0])
    demand = np.array([1.0, 1.0, 2.0])
    grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    best = math.inf
    for x00, x01, x10 in itertools.product(grid, grid, grid):
        if x00 + x01 > 1 + 1e-12 or x00 + x10 > 1 + 1e-12:
            continue
        # remaining free entry x11 bounded by rows/cols and dummy feasibility
        lo = max(0.0, x01 + x10 + x00 - 2.0 + 0.0)
        hi = min(1.0 - x10, 1.0 - x01)
        for x11 in {lo, hi}:
            if x11 < -1e-12 or x11 > hi + 1e-12:
                continue
            plan = np.zeros((3, 3))
            plan[0, 0], plan[0, 1], plan[1, 0], plan[1, 1] = x00, x01, x10, x11
            plan[0, 2] = supply[0] - x00 - x01
            plan[1, 2] = supply[1] - x10 - x11
            plan[2, 0] = demand[0] - x00 - x10
            plan[2, 1] = demand[1] - x01 - x11
            plan[2, 2] = supply[2] - plan[2, 0] - plan[2, 1]
            if plan.min() < -1e-12 or abs(plan[:, 2].sum() - demand[2]) > 1e-9:
                continue
            best = min(best, float((plan * cost).sum()))
    return best


def ari_reference(a, b):
    from sklearn.metrics import adjusted_rand_score

    return adjusted_rand_score(a, b)


def rotation_about(axis, angle):
    """Rodrigues rotation matrix (column-vector convention)."""
    k = np.asarray(axis, float)
    k = k / np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * K @ K


def edge_manifold(mesh):
    """True if every undirected edge is shared by exactly two triangles."""
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def signed_volume(mesh):
    a, b, c = mesh.corners()
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)
