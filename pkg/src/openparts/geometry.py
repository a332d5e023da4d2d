"""Geometric kernel: indexed meshes, gravity-aligned boxes, BVH ray casting and 3D GIoU."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import EmptyInput, EmptyMesh, InvalidDirection, ZeroVolume

LEAF_SIZE = 4
UNIT_TOL = 1e-6


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 3)
    return arr


@dataclass(eq=False)
class TriMesh:
    """Indexed triangle mesh with optional per-vertex attributes.

    ``colors`` are stored as ``uint8`` RGB so that round trips through PLY and
    OBJ stay exact.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray | None = None
    colors: np.ndarray | None = None
    uvs: np.ndarray | None = None
    texture_path: str | None = None

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        self.triangles = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        nv = len(self.vertices)
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= nv:
                raise ValueError("triangle index out of range")
            t = self.triangles
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise ValueError("triangle with repeated vertex index")
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(nv, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(nv, 3)
        if self.uvs is not None:
            self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(nv, 2)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices
        t = self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def triangle_areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    @property
    def total_area(self) -> float:
        return float(self.triangle_areas().sum())

    def face_normals(self) -> np.ndarray:
        """Unit face normals; degenerate faces get a zero vector."""
        a, b, c = self.corners()
        n = np.cross(b - a, c - a)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            n = np.where(norm > 0, n / norm, 0.0)
        return n

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise EmptyMesh("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))

    def submesh(self, triangle_ids: Iterable[int]) -> TriMesh:
        """Mesh made of the given triangles (in ascending id order), unused vertices dropped."""
        ids = np.unique(np.fromiter(triangle_ids, dtype=np.int64))
        tris = self.triangles[ids]
        used, inverse = np.unique(tris.ravel(), return_inverse=True)
        return TriMesh(
            self.vertices[used],
            inverse.reshape(-1, 3),
            normals=None if self.normals is None else self.normals[used],
            colors=None if self.colors is None else self.colors[used],
            uvs=None if self.uvs is None else self.uvs[used],
            texture_path=self.texture_path,
        )

    def transformed(self, rotation=None, translation=None, scale: float = 1.0) -> TriMesh:
        r = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        verts = scale * self.vertices @ r.T + t
        normals = None if self.normals is None else self.normals @ r.T
        return TriMesh(verts, self.triangles.copy(), normals, self.colors, self.uvs, self.texture_path)

    def copy(self) -> TriMesh:
        return TriMesh(
            self.vertices.copy(), self.triangles.copy(),
            None if self.normals is None else self.normals.copy(),
            None if self.colors is None else self.colors.copy(),
            None if self.uvs is None else self.uvs.copy(),
            self.texture_path,
        )


def concatenate(meshes: Sequence[TriMesh]) -> TriMesh:
    """Stack meshes in order; attributes survive only if every input carries them."""
    meshes = [m for m in meshes if m.n_vertices]
    if not meshes:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    offsets = np.cumsum([0] + [m.n_vertices for m in meshes[:-1]])
    verts = np.concatenate([m.vertices for m in meshes])
    tris = np.concatenate([m.triangles + o for m, o in zip(meshes, offsets)])

    def stack(attr):
        vals = [getattr(m, attr) for m in meshes]
        return None if any(v is None for v in vals) else np.concatenate(vals)

    return TriMesh(verts, tris, stack("normals"), stack("colors"), stack("uvs"), meshes[0].texture_path)


def prism_arrays(polygon, z0: float, z1: float) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and outward-wound triangles of a closed prism over a convex 2D polygon."""
    poly = np.asarray(polygon, dtype=np.float64).reshape(-1, 2)
    x, y = poly[:, 0], poly[:, 1]
    if (x * np.roll(y, -1) - np.roll(x, -1) * y).sum() < 0:
        poly = poly[::-1]
    n = len(poly)
    verts = np.concatenate([np.column_stack([poly, np.full(n, z0)]), np.column_stack([poly, np.full(n, z1)])])
    tris = []
    for i in range(1, n - 1):
        tris.append((0, i + 1, i))
        tris.append((n, n + i, n + i + 1))
    for i in range(n):
        j = (i + 1) % n
        tris.append((i, j, n + j))
        tris.append((i, n + j, n + i))
    return verts, np.array(tris, dtype=np.int64)


def prism_mesh(polygon, z0: float, z1: float) -> TriMesh:
    return TriMesh(*prism_arrays(polygon, z0, z1))


def box_mesh(lo, hi) -> TriMesh:
    """Closed axis-aligned box with outward-facing triangles."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    rect = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
    return prism_mesh(rect, lo[2], hi[2])


@dataclass(frozen=True)
class Frame:
    """Canonical object frame given by unit ``up`` and ``front`` vectors."""

    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    front: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        up = np.asarray(self.up, dtype=np.float64)
        front = np.asarray(self.front, dtype=np.float64)
        if abs(np.linalg.norm(up) - 1) > UNIT_TOL or abs(np.linalg.norm(front) - 1) > UNIT_TOL:
            raise InvalidDirection("frame vectors must be unit length")
        if abs(float(up @ front)) >= UNIT_TOL:
            raise InvalidDirection("frame up and front must be orthogonal")
        object.__setattr__(self, "up", tuple(float(x) for x in up))
        object.__setattr__(self, "front", tuple(float(x) for x in front))

    @property
    def up_vec(self) -> np.ndarray:
        return np.array(self.up)

    @property
    def front_vec(self) -> np.ndarray:
        return np.array(self.front)

    @property
    def right_vec(self) -> np.ndarray:
        return np.cross(self.front_vec, self.up_vec)

    @property
    def matrix(self) -> np.ndarray:
        """Rows are (right, front, up); maps world vectors to frame coordinates."""
        return np.stack([self.right_vec, self.front_vec, self.up_vec])

    def to_local(self, points) -> np.ndarray:
        return _as_points(points) @ self.matrix.T

    def to_world(self, local) -> np.ndarray:
        return _as_points(local) @ self.matrix

    def rotated(self, rotation) -> Frame:
        r = np.asarray(rotation, dtype=np.float64)
        up = r @ self.up_vec
        front = r @ self.front_vec
        return Frame(tuple(up / np.linalg.norm(up)), tuple(front / np.linalg.norm(front)))


@dataclass(frozen=True, eq=False)
class OrientedBox:
    center: np.ndarray
    axes: np.ndarray  # rows: right, front, up
    half_extents: np.ndarray

    RIGHT, FRONT, UP = 0, 1, 2

    @property
    def right(self) -> np.ndarray:
        return self.axes[0]

    @property
    def front(self) -> np.ndarray:
        return self.axes[1]

    @property
    def up(self) -> np.ndarray:
        return self.axes[2]

    def corners(self) -> np.ndarray:
        signs = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)], dtype=np.float64)
        return self.center + (signs * self.half_extents) @ self.axes

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    @property
    def diagonal(self) -> float:
        return float(2.0 * np.linalg.norm(self.half_extents))

    def to_local(self, points) -> np.ndarray:
        return (_as_points(points) - self.center) @ self.axes.T

    def contains(self, points, tol: float = 1e-6) -> np.ndarray:
        local = self.to_local(points)
        return np.all(np.abs(local) <= self.half_extents + tol, axis=1)

    def face_center(self, axis: int, sign: int) -> np.ndarray:
        return self.center + sign * self.half_extents[axis] * self.axes[axis]

    def edges(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """The 12 edges as (start, end) segments."""
        out = []
        for axis in range(3):
            a, b = [k for k in range(3) if k != axis]
            for sa in (-1, 1):
                for sb in (-1, 1):
                    base = self.center + sa * self.half_extents[a] * self.axes[a] + sb * self.half_extents[b] * self.axes[b]
                    d = self.half_extents[axis] * self.axes[axis]
                    out.append((base - d, base + d))
        return out

    def face_edges(self, axis: int, sign: int) -> list[tuple[np.ndarray, np.ndarray, int, int]]:
        """Edges of the face normal to ``axis`` on side ``sign``.

        Each entry is ``(start, end, along_axis, side)`` where the edge runs
        along ``along_axis`` and sits on side ``side`` of the remaining axis.
        """
        out = []
        fc = self.face_center(axis, sign)
        others = [k for k in range(3) if k != axis]
        for along in others:
            (across,) = [k for k in others if k != along]
            for side in (-1, 1):
                mid = fc + side * self.half_extents[across] * self.axes[across]
                d = self.half_extents[along] * self.axes[along]
                out.append((mid - d, mid + d, along, side))
        return out


@dataclass(frozen=True)
class AABB:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    @classmethod
    def from_points(cls, points) -> AABB:
        pts = _as_points(points)
        if len(pts) == 0:
            raise EmptyInput("no points")
        return cls(tuple(pts.min(axis=0)), tuple(pts.max(axis=0)))

    @property
    def volume(self) -> float:
        ext = np.maximum(np.subtract(self.hi, self.lo), 0.0)
        return float(np.prod(ext))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))


@dataclass(frozen=True)
class RayHit:
    distance: float
    triangle_id: int
    point: np.ndarray = field(compare=False)


def _pad_bounds(lo: np.ndarray, hi: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    pad = 1e-9 * scale + 1e-300
    return lo - pad - np.abs(lo) * 1e-12, hi + pad + np.abs(hi) * 1e-12


class SpatialIndex:
    """Bounding volume hierarchy over a mesh, immutable after construction.

    Built level by level with median splits along the widest centroid extent,
    so construction is vectorized and the tree depth stays logarithmic.
    """

    def __init__(self, mesh: TriMesh, leaf_size: int = LEAF_SIZE):
        if mesh.n_triangles == 0:
            raise EmptyMesh("cannot index a mesh without triangles")
        self.mesh = mesh
        a, b, c = mesh.corners()
        self.v0 = np.ascontiguousarray(a)
        self.v1 = np.ascontiguousarray(b)
        self.v2 = np.ascontiguousarray(c)
        self._build(leaf_size)

    def _build(self, leaf_size: int) -> None:
        tri_lo = np.minimum(np.minimum(self.v0, self.v1), self.v2)
        tri_hi = np.maximum(np.maximum(self.v0, self.v1), self.v2)
        cent = (self.v0 + self.v1 + self.v2) / 3.0
        n = len(cent)
        scale = float(np.linalg.norm(tri_hi.max(axis=0) - tri_lo.min(axis=0))) or 1.0
        order = np.arange(n, dtype=np.int64)
        records = []
        starts = np.array([0], dtype=np.int64)
        ends = np.array([n], dtype=np.int64)
        ids = np.array([0], dtype=np.int64)
        n_nodes = 1
        while len(starts):
            seg_of = np.repeat(np.arange(len(starts)), ends - starts)
            elem = np.concatenate([np.arange(s, e) for s, e in zip(starts, ends)])
            tris = order[elem]
            lo = np.full((len(starts), 3), np.inf)
            hi = np.full((len(starts), 3), -np.inf)
            np.minimum.at(lo, seg_of, tri_lo[tris])
            np.maximum.at(hi, seg_of, tri_hi[tris])
            clo = np.full((len(starts), 3), np.inf)
            chi = np.full((len(starts), 3), -np.inf)
            np.minimum.at(clo, seg_of, cent[tris])
            np.maximum.at(chi, seg_of, cent[tris])
            lo, hi = _pad_bounds(lo, hi, scale)
            counts = ends - starts
            split = counts > leaf_size
            child_ids = np.full((len(starts), 2), -1, dtype=np.int64)
            n_split = int(split.sum())
            child_ids[split] = n_nodes + np.arange(2 * n_split).reshape(-1, 2)
            n_nodes += 2 * n_split
            for k in range(len(starts)):
                records.append((ids[k], lo[k], hi[k], child_ids[k, 0], child_ids[k, 1],
                             starts[k], counts[k]))
            if not n_split:
                break
            axis = np.argmax(chi - clo, axis=1)
            in_split = split[seg_of]
            e_split = elem[in_split]
            s_split = seg_of[in_split]
            key = cent[order[e_split], axis[s_split]]
            perm = np.lexsort((key, s_split))
            order[np.sort(e_split)] = order[e_split[perm]]
            mids = (starts + ends) // 2
            sp = np.flatnonzero(split)
            starts = np.concatenate([starts[sp], mids[sp]])
            ends = np.concatenate([mids[sp], ends[sp]])
            ids = np.concatenate([child_ids[sp, 0], child_ids[sp, 1]])
            o = np.argsort(starts, kind="stable")
            starts, ends, ids = starts[o], ends[o], ids[o]
        m = n_nodes
        self.node_lo = np.zeros((m, 3))
        self.node_hi = np.zeros((m, 3))
        self.node_left = np.full(m, -1, dtype=np.int64)
        self.node_right = np.full(m, -1, dtype=np.int64)
        self.node_start = np.zeros(m, dtype=np.int64)
        self.node_count = np.zeros(m, dtype=np.int64)
        for nid, lo, hi, left, right, start, count in records:
            self.node_lo[nid] = lo
            self.node_hi[nid] = hi
            self.node_left[nid] = left
            self.node_right[nid] = right
            self.node_start[nid] = start
            self.node_count[nid] = count
        self.tri_order = order

    @property
    def n_nodes(self) -> int:
        return len(self.node_left)

    def ray_cast_many(self, origins, directions, t_min=0.0, t_max=np.inf) -> tuple[np.ndarray, np.ndarray]:
        """Nearest hits for a batch of rays: ``(distances, triangle_ids)``, id -1 on a miss.

        Equal-distance hits resolve to the lowest triangle id.
        """
        o = np.ascontiguousarray(_as_points(origins))
        d = np.ascontiguousarray(_as_points(directions))
        n = len(o)
        tmin = np.ascontiguousarray(np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,)))
        tmax = np.ascontiguousarray(np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)))
        if n == 0:
            return np.zeros(0), np.zeros(0, dtype=np.int64)
        return kernels.ray_cast_batch(
            self.node_lo, self.node_hi, self.node_left, self.node_right,
            self.node_start, self.node_count, self.tri_order,
            self.v0, self.v1, self.v2, o, d, tmin, tmax,
        )

    def closest_triangle(self, point) -> tuple[int, np.ndarray, float]:
        """Nearest triangle to ``point`` as ``(triangle_id, closest_point, distance)``."""
        p = np.asarray(point, dtype=np.float64).reshape(3)
        q = closest_points_on_triangles(np.broadcast_to(p, self.v0.shape), self.v0, self.v1, self.v2)
        d = np.linalg.norm(q - p, axis=1)
        i = int(np.argmin(d))
        return i, q[i], float(d[i])


def build_bvh(mesh: TriMesh) -> SpatialIndex:
    return SpatialIndex(mesh)


def ray_cast(index: SpatialIndex, origin, direction, t_min: float = 0.0,
             t_max: float = np.inf) -> RayHit | None:
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(d) - 1.0) > UNIT_TOL:
        raise InvalidDirection(f"direction must be unit length, got |d|={np.linalg.norm(d):.6g}")
    if not 0 <= t_min < t_max:
        raise ValueError("need 0 <= t_min < t_max")
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    t, tri = index.ray_cast_many(o[None], d[None], t_min, t_max)
    if tri[0] < 0:
        return None
    return RayHit(float(t[0]), int(tri[0]), o + t[0] * d)


def brute_force_ray_cast(mesh: TriMesh, origin, direction, t_min=0.0, t_max=np.inf) -> tuple[float, int]:
    """Reference nearest hit over every triangle; shares the intersection test but no traversal."""
    from ._pykernels import _watertight

    a, b, c = mesh.corners()
    n = len(a)
    o = np.broadcast_to(np.asarray(origin, dtype=np.float64), (n, 3))
    d = np.broadcast_to(np.asarray(direction, dtype=np.float64), (n, 3))
    t = _watertight(a, b, c, np.ascontiguousarray(o), np.ascontiguousarray(d))
    ok = (t >= t_min) & (t <= t_max)
    if not ok.any():
        return np.inf, -1
    ids = np.flatnonzero(ok)
    best = ids[np.lexsort((ids, t[ids]))[0]]
    return float(t[best]), int(best)


def surface_epsilon(mesh: TriMesh) -> float:
    """Offset used when rays start on a surface."""
    return 1e-4 * mesh.diagonal


def closest_points_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest point on each triangle (a, b, c) to the matching query point, vectorized."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        out = a + ab * v[:, None] + ac * w[:, None]
        # edge regions
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    cases = [
        ((d1 <= 0) & (d2 <= 0), a),
        ((d3 >= 0) & (d4 <= d3), b),
        ((d6 >= 0) & (d5 <= d6), c),
        ((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + ab * t_ab[:, None]),
        ((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + ac * t_ac[:, None]),
        ((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + (c - b) * t_bc[:, None]),
    ]
    done = np.zeros(len(p), dtype=bool)
    for mask, val in cases:
        take = mask & ~done
        out[take] = val[take]
        done |= take
    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():  # degenerate triangles: nearest vertex
        verts = np.stack([a[bad], b[bad], c[bad]], axis=1)
        k = np.argmin(np.linalg.norm(verts - p[bad][:, None], axis=2), axis=1)
        out[bad] = verts[np.arange(len(k)), k]
    return out


def segment_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between segments [p1, q1] and [p2, q2]."""
    p1, q1, p2, q2 = (np.asarray(x, dtype=np.float64) for x in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-300
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s, t = 0.0, min(max(f / e, 0.0), 1.0)
    else:
        c = float(d1 @ r)
        if e <= eps:
            t, s = 0.0, min(max(-c / a, 0.0), 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom > 1e-15 * a * e else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t, s = 1.0, min(max((b - c) / a, 0.0), 1.0)
    return float(np.linalg.norm((p1 + d1 * s) - (p2 + d2 * t)))


def point_line_distance(point, origin, axis) -> float:
    """Distance from ``point`` to the infinite line through ``origin`` along ``axis``."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    v = np.asarray(point, dtype=np.float64) - np.asarray(origin, dtype=np.float64)
    return float(np.linalg.norm(v - (v @ a) * a))


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices counter-clockwise, collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _footprint(xy: np.ndarray, yaw: float) -> tuple[float, np.ndarray, np.ndarray]:
    c, s = math.cos(yaw), math.sin(yaw)
    u = xy @ np.array([[c, -s], [s, c]])
    lo, hi = u.min(axis=0), u.max(axis=0)
    return float(np.prod(hi - lo)), lo, hi


def min_footprint_yaw(xy: np.ndarray) -> float:
    """Yaw in [0, pi/2) of the minimum-area bounding rectangle (rotating calipers).

    Ties resolve to the smallest yaw.
    """
    hull = convex_hull_2d(xy)
    candidates = {0.0}
    if len(hull) >= 2:
        nxt = np.roll(hull, -1, axis=0)
        d = nxt - hull
        ang = np.mod(np.arctan2(d[:, 1], d[:, 0]), math.pi / 2)
        ang[ang >= math.pi / 2] = 0.0
        candidates.update(float(a) for a in ang)
    pts = hull if len(hull) else xy
    best_yaw, best_area = 0.0, math.inf
    for yaw in sorted(candidates):
        area, _, _ = _footprint(pts, yaw)
        if area < best_area * (1 - 1e-12) - 1e-300:
            best_yaw, best_area = yaw, area
    return best_yaw


def gravity_obb(points, frame: Frame) -> OrientedBox:
    """Box rotating only about ``frame.up`` with the smallest horizontal footprint.

    The front axis is the horizontal box axis most aligned with
    ``frame.front``; right completes a right-handed (right, front, up) set.
    """
    pts = _as_points(points)
    if len(pts) == 0:
        raise EmptyInput("gravity_obb needs at least one point")
    local = frame.to_local(pts)
    yaw = min_footprint_yaw(local[:, :2])
    c, s = math.cos(yaw), math.sin(yaw)
    a1 = np.array([c, s, 0.0])
    a2 = np.array([-s, c, 0.0])
    up = np.array([0.0, 0.0, 1.0])
    if c >= s:
        right_l, front_l = a1, a2
    else:
        right_l, front_l = -a2, a1
    axes_l = np.stack([right_l, front_l, up])
    proj = local @ axes_l.T
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    center_l = ((lo + hi) / 2.0) @ axes_l
    m = frame.matrix
    return OrientedBox(center_l @ m, axes_l @ m, (hi - lo) / 2.0)


def box_yaw_degrees(box: OrientedBox, frame: Frame) -> float:
    """Yaw of the box about ``frame.up`` relative to the frame, folded into [0, 90)."""
    r = box.right
    ang = math.degrees(math.atan2(float(r @ frame.front_vec), float(r @ frame.right_vec)))
    ang = ang % 90.0
    return 0.0 if ang > 90.0 - 1e-9 else ang


def aabb_in_frame(points, frame: Frame | None = None) -> AABB:
    """Axis-aligned box of ``points`` expressed in the frame's (right, front, up) coordinates."""
    pts = _as_points(points)
    if frame is not None:
        pts = frame.to_local(pts)
    return AABB.from_points(pts)


def giou3d(a: AABB, b: AABB) -> float:
    """Generalized IoU of two axis-aligned 3D boxes."""
    alo, ahi = np.asarray(a.lo, dtype=np.float64), np.asarray(a.hi, dtype=np.float64)
    blo, bhi = np.asarray(b.lo, dtype=np.float64), np.asarray(b.hi, dtype=np.float64)
    if np.any(ahi < alo) or np.any(bhi < blo):
        raise ValueError("box extents must be nonnegative")
    va = float(np.prod(ahi - alo))
    vb = float(np.prod(bhi - blo))
    if va == 0.0 and vb == 0.0:
        raise ZeroVolume("both boxes have zero volume")
    inter = float(np.prod(np.maximum(np.minimum(ahi, bhi) - np.maximum(alo, blo), 0.0)))
    union = va + vb - inter
    hull = float(np.prod(np.maximum(ahi, bhi) - np.minimum(alo, blo)))
    return inter / union - (hull - union) / hull
