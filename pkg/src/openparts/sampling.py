"""Point-cloud bridge: surface sampling, farthest point sampling, kNN label transfer, triangle voting."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from plyfile import PlyData, PlyElement
from scipy.spatial import cKDTree

from . import kernels
from .assets_io.types import PartInstance, PartLabel, PartSegmentation
from .errors import DegenerateMesh, EmptyInput, InvalidCount, ParseError, UncoveredTriangle
from .geometry import TriMesh

log = logging.getLogger(__name__)

BASE = -1
BASE_CONFIDENCE = 0.5


@dataclass(frozen=True)
class InstanceInfo:
    id: str
    label: PartLabel
    confidence: float


@dataclass
class PointLabels:
    """Per-point instance index into ``table``; ``BASE`` (-1) marks base points."""

    instance: np.ndarray
    table: list[InstanceInfo] = field(default_factory=list)

    def confidence(self) -> np.ndarray:
        conf = np.array([i.confidence for i in self.table] + [BASE_CONFIDENCE])
        return conf[self.instance]  # -1 indexes the trailing base entry

    def subset(self, idx) -> PointLabels:
        return PointLabels(self.instance[idx], self.table)


@dataclass
class SampledPointCloud:
    positions: np.ndarray
    normals: np.ndarray
    source_triangle: np.ndarray
    vertex_id: np.ndarray | None = None
    labels: PointLabels | None = None

    def __post_init__(self) -> None:
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.source_triangle = np.asarray(self.source_triangle, dtype=np.int64).ravel()
        n = len(self.positions)
        if self.vertex_id is None:
            self.vertex_id = np.full(n, -1, dtype=np.int64)
        self.vertex_id = np.asarray(self.vertex_id, dtype=np.int64).ravel()
        if not (len(self.normals) == len(self.source_triangle) == len(self.vertex_id) == n):
            raise ValueError("point cloud fields differ in length")
        if self.labels is not None and len(self.labels.instance) != n:
            raise ValueError("label array length differs from point count")

    def __len__(self) -> int:
        return len(self.positions)

    def subset(self, idx) -> SampledPointCloud:
        idx = np.asarray(idx, dtype=np.int64)
        return SampledPointCloud(
            self.positions[idx], self.normals[idx], self.source_triangle[idx], self.vertex_id[idx],
            None if self.labels is None else self.labels.subset(idx),
        )


def _unit_normals(mesh: TriMesh) -> np.ndarray:
    n = mesh.face_normals()
    zero = ~np.any(n != 0, axis=1)
    n[zero] = (0.0, 0.0, 1.0)  # zero-area faces still need a unit vector
    return n


def _lowest_incident_triangle(mesh: TriMesh) -> np.ndarray:
    first = np.full(mesh.n_vertices, np.iinfo(np.int64).max, dtype=np.int64)
    tri_ids = np.repeat(np.arange(mesh.n_triangles), 3)
    np.minimum.at(first, mesh.triangles.ravel(), tri_ids)
    return first


def _sample_on(mesh: TriMesh, tri_pool: np.ndarray, areas: np.ndarray, n: int,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    tri = tri_pool[rng.choice(len(tri_pool), size=n, p=areas / areas.sum())]
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.triangles[tri, k]] for k in range(3))
    pts = (1.0 - r1)[:, None] * a + (r1 * (1.0 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return pts, tri


def sample_surface(mesh: TriMesh, n: int, include_vertices: bool = False, seed: int = 0) -> SampledPointCloud:
    """Area-weighted uniform samples, optionally followed by every referenced mesh vertex.

    Appended vertex points keep their vertex index in ``vertex_id`` and take
    the lowest-index incident triangle as ``source_triangle``.
    """
    if n < 0:
        raise InvalidCount("sample count must be nonnegative")
    rng = np.random.default_rng(seed)
    normals = _unit_normals(mesh)
    pos = np.zeros((0, 3))
    tri = np.zeros(0, dtype=np.int64)
    if n > 0:
        areas = mesh.triangle_areas()
        if not areas.sum() > 0:
            raise DegenerateMesh("cannot sample a mesh with zero surface area")
        pos, tri = _sample_on(mesh, np.arange(mesh.n_triangles), areas, n, rng)
    vid = np.full(len(pos), -1, dtype=np.int64)
    if include_vertices:
        first = _lowest_incident_triangle(mesh)
        used = np.flatnonzero(first < mesh.n_triangles)
        pos = np.concatenate([pos, mesh.vertices[used]])
        tri = np.concatenate([tri, first[used]])
        vid = np.concatenate([vid, used])
    return SampledPointCloud(pos, normals[tri], tri, vid)


def sample_per_part(mesh: TriMesh, seg: PartSegmentation, per_part: int = 200_000,
                    total: int = 20_000, seed: int = 0) -> SampledPointCloud:
    """Training-style sampling: ``per_part`` points in each part and in the base, then FPS to ``total``."""
    rng = np.random.default_rng(seed)
    areas = mesh.triangle_areas()
    normals = _unit_normals(mesh)
    inst = seg.instance_index()
    table = [InstanceInfo(p.id, p.label, p.confidence) for p in seg.parts]
    chunks = []
    for k in list(range(len(seg.parts))) + [BASE]:
        pool = np.flatnonzero(inst == k)
        if pool.size == 0:
            continue
        if not areas[pool].sum() > 0:
            name = "base" if k == BASE else seg.parts[k].id
            log.warning("skipping zero-area part %s", name)
            continue
        pts, tri = _sample_on(mesh, pool, areas[pool], per_part, rng)
        chunks.append((pts, tri, np.full(per_part, k, dtype=np.int64)))
    if not chunks:
        raise DegenerateMesh("no part with positive area")
    pos = np.concatenate([c[0] for c in chunks])
    tri = np.concatenate([c[1] for c in chunks])
    lab = np.concatenate([c[2] for c in chunks])
    cloud = SampledPointCloud(pos, normals[tri], tri, labels=PointLabels(lab, table))
    if len(cloud) <= total:
        return cloud
    return cloud.subset(farthest_point_sample(cloud.positions, total))


def _morton_codes(points: np.ndarray) -> np.ndarray:
    lo = points.min(axis=0)
    ext = float((points.max(axis=0) - lo).max()) or 1.0
    q = np.clip(((points - lo) / ext * (2**21 - 1)).astype(np.uint64), 0, 2**21 - 1)

    def spread(x):
        x = x & np.uint64(0x1FFFFF)
        x = (x | (x << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
        x = (x | (x << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
        x = (x | (x << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
        x = (x | (x << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
        x = (x | (x << np.uint64(2))) & np.uint64(0x1249249249249249)
        return x

    return spread(q[:, 0]) | (spread(q[:, 1]) << np.uint64(1)) | (spread(q[:, 2]) << np.uint64(2))


def fps_start_index(points: np.ndarray) -> int:
    """Point farthest from the centroid, lowest index on ties."""
    c = points.mean(axis=0)
    d = points - c
    d2 = (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) + d[:, 2] * d[:, 2]
    return int(np.argmax(d2))


def farthest_point_sample(points, m: int) -> np.ndarray:
    """Exact greedy max-min subset of size ``m`` (lowest index wins ties).

    Points are grouped into spatially compact buckets; a bucket is skipped when
    the newly selected point is provably farther from its box than every
    current nearest-selected distance inside it, so the result equals the
    plain O(n*m) loop.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        raise EmptyInput("no points to sample from")
    if not 1 <= m <= n:
        raise InvalidCount(f"cannot select {m} of {n} points")
    leaf = max(64, n // 4096)
    order = np.argsort(_morton_codes(pts), kind="stable")
    bucket = np.empty(n, dtype=np.int64)
    bucket[order] = np.arange(n) // leaf
    perm = np.lexsort((np.arange(n), bucket))
    nb = int(bucket.max()) + 1
    starts = np.searchsorted(bucket[perm], np.arange(nb)).astype(np.int64)
    ends = np.append(starts[1:], n).astype(np.int64)
    sorted_pts = np.ascontiguousarray(pts[perm])
    b_lo = np.minimum.reduceat(sorted_pts, starts, axis=0)
    b_hi = np.maximum.reduceat(sorted_pts, starts, axis=0)
    first = int(np.flatnonzero(perm == fps_start_index(pts))[0])
    return kernels.fps_buckets(sorted_pts, perm.astype(np.int64), starts, ends,
                               np.ascontiguousarray(b_lo), np.ascontiguousarray(b_hi), first, m)


def knn_propagate(labeled: SampledPointCloud, query: SampledPointCloud, k: int = 3) -> PointLabels:
    """Majority instance among the ``k`` nearest labeled points.

    Ties go to the smaller mean neighbor distance, then the lower instance
    index. A query point that coincides with a labeled point copies that
    point's label, which makes the transfer idempotent on its own input.
    """
    if labeled.labels is None:
        raise ValueError("labeled cloud carries no labels")
    if len(labeled) == 0:
        raise EmptyInput("labeled cloud is empty")
    if k < 1:
        raise InvalidCount("k must be >= 1")
    k = min(k, len(labeled))
    tree = cKDTree(labeled.positions)
    dist, nb = tree.query(query.positions, k=k)
    dist = dist.reshape(len(query), k)
    nb = nb.reshape(len(query), k)
    inst = labeled.labels.instance[nb]
    best = inst[:, 0].copy()
    best_count = np.zeros(len(query), dtype=np.int64)
    best_mean = np.full(len(query), np.inf)
    for j in range(k):
        cand = inst[:, j]
        same = inst == cand[:, None]
        count = same.sum(axis=1)
        mean = np.where(same, dist, 0.0).sum(axis=1) / count
        better = (count > best_count) | ((count == best_count) & (
            (mean < best_mean) | ((mean == best_mean) & (cand < best))))
        best = np.where(better, cand, best)
        best_count = np.where(better, count, best_count)
        best_mean = np.where(better, mean, best_mean)
    exact = dist[:, 0] == 0.0
    if exact.any():
        zero_nb = np.where(dist == 0.0, nb, np.iinfo(np.int64).max)
        best[exact] = labeled.labels.instance[zero_nb[exact].min(axis=1)]
    return PointLabels(best, labeled.labels.table)


def triangle_vote(mesh: TriMesh, cloud: SampledPointCloud) -> np.ndarray:
    """Per-triangle instance index by majority vote of the triangle's points.

    Surface samples vote for their source triangle; vertex points vote for
    every incident triangle, so each triangle gets at least three votes when
    the cloud includes mesh vertices. Ties: larger summed confidence, then
    base, then lower instance index.
    """
    if cloud.labels is None:
        raise ValueError("cloud carries no labels")
    inst = cloud.labels.instance
    conf = cloud.labels.confidence()
    surf = cloud.vertex_id < 0
    tri_votes = [cloud.source_triangle[surf]]
    inst_votes = [inst[surf]]
    conf_votes = [conf[surf]]
    if (~surf).any():
        vt = mesh.triangles.ravel()
        vt_tri = np.repeat(np.arange(mesh.n_triangles), 3)
        order = np.argsort(vt, kind="stable")
        vt_sorted, tri_sorted = vt[order], vt_tri[order]
        pts = np.flatnonzero(~surf)
        vids = cloud.vertex_id[pts]
        lo = np.searchsorted(vt_sorted, vids, side="left")
        hi = np.searchsorted(vt_sorted, vids, side="right")
        reps = hi - lo
        which = np.repeat(pts, reps)
        offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        tri_votes.append(tri_sorted[np.repeat(lo, reps) + offs])
        inst_votes.append(inst[which])
        conf_votes.append(conf[which])
    t = np.concatenate(tri_votes)
    i = np.concatenate(inst_votes)
    c = np.concatenate(conf_votes)
    if t.size and (t.min() < 0 or t.max() >= mesh.n_triangles):
        raise ValueError("point references a triangle outside the mesh")
    keys, inv = np.unique(np.stack([t, i], axis=1), axis=0, return_inverse=True)
    inv = inv.ravel()
    counts = np.bincount(inv, minlength=len(keys))
    conf_sum = np.bincount(inv, weights=c, minlength=len(keys))
    kt, ki = keys[:, 0], keys[:, 1]
    order = np.lexsort((ki, ki != BASE, -conf_sum, -counts, kt))
    kt, ki = kt[order], ki[order]
    first = np.ones(len(kt), dtype=bool)
    first[1:] = kt[1:] != kt[:-1]
    out = np.full(mesh.n_triangles, np.iinfo(np.int64).min, dtype=np.int64)
    out[kt[first]] = ki[first]
    missing = np.flatnonzero(out == np.iinfo(np.int64).min)
    if missing.size:
        raise UncoveredTriangle(f"{missing.size} triangles received no votes (first: {missing[0]})")
    return out


def segmentation_from_instances(per_triangle: np.ndarray, table: list[InstanceInfo]) -> PartSegmentation:
    """Build a segmentation from per-triangle instance indices, dropping empty instances."""
    parts = []
    for k, info in enumerate(table):
        tris = np.flatnonzero(per_triangle == k)
        if tris.size and info.label.openable:
            parts.append(PartInstance(info.id, info.label, tris, info.confidence))
    return PartSegmentation(len(per_triangle), parts)


def write_point_cloud(cloud: SampledPointCloud, path) -> Path:
    """PLY with x, y, z, nx, ny, nz, source_triangle and vertex_id properties."""
    path = Path(path)
    data = np.empty(len(cloud), dtype=[
        ("x", "f8"), ("y", "f8"), ("z", "f8"), ("nx", "f8"), ("ny", "f8"), ("nz", "f8"),
        ("source_triangle", "i4"), ("vertex_id", "i4"),
    ])
    data["x"], data["y"], data["z"] = cloud.positions.T
    data["nx"], data["ny"], data["nz"] = cloud.normals.T
    data["source_triangle"] = cloud.source_triangle
    data["vertex_id"] = cloud.vertex_id
    path.parent.mkdir(parents=True, exist_ok=True)
    PlyData([PlyElement.describe(data, "vertex")]).write(str(path))
    return path


def read_point_cloud(path) -> SampledPointCloud:
    try:
        v = PlyData.read(str(path))["vertex"].data
    except Exception as exc:
        raise ParseError(f"{path}: {exc}") from exc
    names = v.dtype.names
    pos = np.stack([v["x"], v["y"], v["z"]], axis=1).astype(np.float64)
    nrm = np.stack([v["nx"], v["ny"], v["nz"]], axis=1).astype(np.float64)
    vid = v["vertex_id"].astype(np.int64) if "vertex_id" in names else None
    return SampledPointCloud(pos, nrm, v["source_triangle"].astype(np.int64), vid)
