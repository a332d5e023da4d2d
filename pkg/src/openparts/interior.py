"""Interior editing: drawer body completion, hidden-geometry removal, countertops."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .assets_io.types import ArticulatedObject, ArticulatedPart, MotionType, PartLabel
from .errors import DepthTooSmall, EmptyMesh
from .fusion import OrthoCamera, render_index_maps
from .geometry import (
    AABB,
    Frame,
    OrientedBox,
    TriMesh,
    aabb_in_frame,
    build_bvh,
    concatenate,
    gravity_obb,
    prism_arrays as _prism,
    surface_epsilon,
)

log = logging.getLogger(__name__)

SIDE_OFFSET = 0.4
CORNER_MARGIN = 1.25
MIN_THICKNESS = 1e-3
MAX_THICKNESS = 2e-2
THICKNESS_FRACTION = 0.02
WELD_TOL = 1e-6
STRIP_VIEWS = 64
STRIP_RESOLUTION = (512, 512)
COUNTER_GRID = 32
COUNTER_COVERAGE = 0.5
COUNTER_BAND = 0.05
COUNTER_HEIGHT = 0.02

STANDARD, CORNER = "standard", "corner"


@dataclass
class DepthProbe:
    d_center: float
    d_left: float
    d_right: float
    clamped: tuple[bool, bool, bool]

    @property
    def depths(self) -> tuple[float, float, float]:
        return (self.d_center, self.d_left, self.d_right)


@dataclass
class ConnectivitySegment:
    id: int
    triangle_ids: np.ndarray


def _exit_distance(origins: np.ndarray, direction: np.ndarray, box: AABB) -> np.ndarray:
    """Distance along ``direction`` until each origin leaves ``box`` (0 if already outside)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t_hi = np.where(direction > 0, (box.hi - origins) / direction,
                        np.where(direction < 0, (box.lo - origins) / direction, np.inf))
    return np.maximum(t_hi.min(axis=1), 0.0)


def probe_drawer_depth(mesh: TriMesh, front_box: OrientedBox, frame: Frame | None = None,
                       index=None) -> DepthProbe:
    """Cast center, left and right rays backward from just behind the drawer front.

    Depths are measured from the rear plane of the front. Probes that hit
    nothing fall back to the distance to the object's bounding box, taken in
    ``frame`` coordinates (world axes when no frame is given).
    """
    if front_box.half_extents[0] <= 0 or front_box.half_extents[2] <= 0:
        raise DepthTooSmall("drawer front has no width or height")
    frame = frame or Frame()
    eps = surface_epsilon(mesh)
    back = front_box.center - front_box.front * front_box.half_extents[1]
    lateral = np.array([0.0, -SIDE_OFFSET, SIDE_OFFSET]) * 2 * front_box.half_extents[0]
    origins = back - eps * front_box.front + lateral[:, None] * front_box.right
    direction = -front_box.front
    local_box = aabb_in_frame(mesh.vertices, frame)
    local_o = frame.to_local(origins)
    local_d = frame.matrix @ direction
    limit = _exit_distance(local_o, local_d, local_box)
    index = build_bvh(mesh) if index is None else index
    dirs = np.broadcast_to(direction, origins.shape).copy()
    t, tri = index.ray_cast_many(origins, dirs, 0.0, np.maximum(limit, 1e-300))
    clamped = tri < 0
    depth = np.where(clamped, limit, t) + eps
    return DepthProbe(float(depth[0]), float(depth[1]), float(depth[2]), tuple(bool(c) for c in clamped))


def classify_drawer(probe: DepthProbe, margin: float = CORNER_MARGIN) -> str:
    return CORNER if probe.d_center > margin * max(probe.d_left, probe.d_right) else STANDARD


def default_thickness(front_box: OrientedBox) -> float:
    size = 2 * min(front_box.half_extents[0], front_box.half_extents[2])
    return float(np.clip(THICKNESS_FRACTION * size, MIN_THICKNESS, MAX_THICKNESS))


def _rect(x0, x1, y0, y1) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def _angled_wall(p: np.ndarray, q: np.ndarray, thickness: float) -> np.ndarray:
    """Quad of the given thickness on the front side (toward y = 0) of segment p-q."""
    d = q - p
    n = np.array([d[1], -d[0]]) / np.hypot(*d)
    if n[1] > 0:
        n = -n
    return np.array([p, q, q + n * thickness, p + n * thickness])


def build_drawer_body(front_box: OrientedBox, probe: DepthProbe, kind: str, thickness: float,
                      color=None, uv=None) -> TriMesh:
    """Closed slabs forming the drawer behind its front, in the front box's frame.

    Local coordinates: x along the box right axis, y pointing backward from
    the rear plane of the front, z along the box up axis.
    """
    if thickness < 1e-5:
        log.warning("drawer wall thickness %g too small; using %g", thickness, MIN_THICKNESS)
        thickness = MIN_THICKNESS
    t = float(thickness)
    hw, hh = front_box.half_extents[0], front_box.half_extents[2]
    if hw <= 0 or hh <= 0:
        raise DepthTooSmall("drawer front has no width or height")
    slabs = []
    zb, zt = -hh, hh
    if kind == STANDARD:
        depth = min(probe.depths)
        if depth < 2 * t:
            raise DepthTooSmall(f"interior depth {depth:g} below twice the wall thickness")
        d = depth - t
        slabs.append(_prism(_rect(-hw, hw, 0.0, d), zb, zb + t))
        slabs.append(_prism(_rect(-hw, -hw + t, 0.0, d), zb + t, zt))
        slabs.append(_prism(_rect(hw - t, hw, 0.0, d), zb + t, zt))
        slabs.append(_prism(_rect(-hw + t, hw - t, d - t, d), zb + t, zt))
    elif kind == CORNER:
        # Extrapolate the side probes (taken at 40% of the half-width) to the edges.
        scale = 0.5 / SIDE_OFFSET
        c = probe.d_center
        e_left = c + (probe.d_left - c) * scale
        e_right = c + (probe.d_right - c) * scale
        if min(c, e_left, e_right) < 2 * t:
            raise DepthTooSmall("corner interior too shallow for the wall thickness")
        c, e_left, e_right = c - t, e_left - t, e_right - t
        left, right, peak = np.array([-hw, e_left]), np.array([hw, e_right]), np.array([0.0, c])
        floor = np.array([[-hw, 0.0], [hw, 0.0], right, peak, left])
        slabs.append(_prism(floor, zb, zb + t))
        slabs.append(_prism(_rect(-hw, -hw + t, 0.0, e_left), zb + t, zt))
        slabs.append(_prism(_rect(hw - t, hw, 0.0, e_right), zb + t, zt))
        slabs.append(_prism(_angled_wall(left, peak, t), zb + t, zt))
        slabs.append(_prism(_angled_wall(peak, right, t), zb + t, zt))
    else:
        raise ValueError(f"unknown drawer kind {kind!r}")

    back = front_box.center - front_box.front * front_box.half_extents[1]
    basis = np.stack([front_box.right, -front_box.front, front_box.up])
    flip = np.linalg.det(basis) < 0
    meshes = []
    for verts, tris in slabs:
        world = back + verts @ basis
        if flip:
            tris = tris[:, ::-1]
        n = len(world)
        colors = None if color is None else np.tile(np.asarray(color, dtype=np.uint8), (n, 1))
        uvs = None if uv is None else np.tile(np.asarray(uv, dtype=np.float64), (n, 1))
        meshes.append(TriMesh(world, tris.copy(), colors=colors, uvs=uvs))
    return concatenate(meshes)


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted vertex normals."""
    a, b, c = mesh.corners()
    fn = np.cross(b - a, c - a)
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.triangles[:, k], fn)
    norm = np.linalg.norm(acc, axis=1, keepdims=True)
    return np.divide(acc, norm, out=np.zeros_like(acc), where=norm > 0)


def _area_weighted_mean(mesh: TriMesh, values: np.ndarray) -> np.ndarray:
    areas = mesh.triangle_areas()
    per_tri = values[mesh.triangles].mean(axis=1)
    if areas.sum() > 0:
        return (per_tri * areas[:, None]).sum(axis=0) / areas.sum()
    return per_tri.mean(axis=0)


def complete_drawer(part_mesh: TriMesh, scene: TriMesh, frame: Frame, thickness: float | None = None,
                    index=None, margin: float = CORNER_MARGIN) -> TriMesh:
    """Front triangles followed by a generated body; the original triangles are untouched."""
    front_box = gravity_obb(part_mesh.vertices, frame)
    probe = probe_drawer_depth(scene, front_box, frame, index)
    kind = classify_drawer(probe, margin)
    t = default_thickness(front_box) if thickness is None else thickness
    color = None
    if part_mesh.colors is not None:
        color = np.clip(np.rint(_area_weighted_mean(part_mesh, part_mesh.colors.astype(np.float64))), 0, 255)
    uv = None if part_mesh.uvs is None else _area_weighted_mean(part_mesh, part_mesh.uvs)
    body = build_drawer_body(front_box, probe, kind, t, color, uv)
    if part_mesh.normals is not None:
        body.normals = vertex_normals(body)
    return concatenate([part_mesh, body])


def complete_interiors(obj: ArticulatedObject, thickness: float | None = None,
                       diagnostics: list[str] | None = None, margin: float = CORNER_MARGIN) -> ArticulatedObject:
    """Add a body behind every prismatic drawer; other parts and the base pass through."""
    targets = [p for p in obj.parts
               if p.label is PartLabel.DRAWER and p.motion is not None
               and p.motion.motion_type is MotionType.PRISMATIC]
    if not targets:
        return ArticulatedObject(obj.base, list(obj.parts), obj.frame)
    scene = concatenate([obj.base] + [p.mesh for p in obj.parts])
    index = build_bvh(scene)
    parts = []
    for p in obj.parts:
        mesh = p.mesh
        if any(p is q for q in targets):
            try:
                mesh = complete_drawer(p.mesh, scene, obj.frame, thickness, index, margin)
            except Exception as exc:  # leave the part as is
                msg = f"part {p.id}: interior completion failed: {exc}"
                log.warning(msg)
                if diagnostics is not None:
                    diagnostics.append(msg)
        parts.append(ArticulatedPart(p.id, mesh, p.label, p.motion))
    return ArticulatedObject(obj.base, parts, obj.frame)


def weld_vertices(vertices: np.ndarray, tol: float = WELD_TOL) -> np.ndarray:
    """Representative vertex id per vertex, merging vertices closer than ``tol`` (transitively)."""
    n = len(vertices)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    pairs = cKDTree(vertices).query_pairs(tol, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    first = np.full(labels.max() + 1, n, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(n))
    return first[labels]


def connectivity_segments(mesh: TriMesh, tol: float = WELD_TOL) -> list[ConnectivitySegment]:
    """Edge-connected components after welding; segments are ordered by their lowest triangle id."""
    if mesh.n_triangles == 0:
        raise EmptyMesh("mesh has no triangles")
    rep = weld_vertices(mesh.vertices, tol)
    tris = rep[mesh.triangles]
    m = len(tris)
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges.sort(axis=1)
    owner = np.tile(np.arange(m), 3)
    keep = edges[:, 0] != edges[:, 1]
    edges, owner = edges[keep], owner[keep]
    _, edge_id = np.unique(edges, axis=0, return_inverse=True)
    edge_id = edge_id.reshape(-1)
    # bipartite graph triangles <-> edges
    n_edges = edge_id.max() + 1 if edge_id.size else 0
    graph = coo_matrix((np.ones(len(owner)), (owner, m + edge_id)), shape=(m + n_edges, m + n_edges))
    _, labels = connected_components(graph, directed=False)
    tri_labels = labels[:m]
    _, first, inverse = np.unique(tri_labels, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    seg_of = rank[inverse.reshape(-1)]
    return [ConnectivitySegment(k, np.flatnonzero(seg_of == k)) for k in range(len(order))]


def fibonacci_directions(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def view_cameras(mesh: TriMesh, views: int) -> list[OrthoCamera]:
    """Orthographic cameras on a Fibonacci sphere, each framing the whole bounding sphere."""
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2
    diag = max(float(np.linalg.norm(hi - lo)), 1e-9)
    cams = []
    for d in fibonacci_directions(views):
        # extent slightly above the diagonal so the silhouette never touches the border
        cams.append(OrthoCamera(center - d * diag, d, np.array([0.0, 0.0, 1.0]), diag * 1.01))
    return cams


def visible_triangles(mesh: TriMesh, views: int = STRIP_VIEWS, resolution=STRIP_RESOLUTION) -> np.ndarray:
    seen = np.zeros(mesh.n_triangles, dtype=bool)
    index = build_bvh(mesh)
    for cam in view_cameras(mesh, views):
        ids = render_index_maps(mesh, [cam], resolution, index)[0]
        ids = ids[ids >= 0]
        seen[ids] = True
    return seen


def strip_interior(mesh: TriMesh, views: int = STRIP_VIEWS, resolution=STRIP_RESOLUTION) -> TriMesh:
    """Keep only connectivity segments with at least one triangle visible from outside."""
    if views < 4:
        raise ValueError("need at least 4 views")
    if mesh.n_triangles == 0:
        return mesh.copy()
    seen = visible_triangles(mesh, views, resolution)
    keep = [s.triangle_ids for s in connectivity_segments(mesh) if seen[s.triangle_ids].any()]
    ids = np.sort(np.concatenate(keep)) if keep else np.zeros(0, dtype=np.int64)
    return mesh.submesh(ids)


def top_coverage(mesh: TriMesh, frame: Frame | None = None, grid: int = COUNTER_GRID,
                 band: float = COUNTER_BAND, index=None) -> float:
    """Fraction of a grid of downward rays over the footprint that hit near the top of the box."""
    frame = frame or Frame()
    box = aabb_in_frame(mesh.vertices, frame)
    height = box.hi[2] - box.lo[2]
    u = box.lo[0] + (np.arange(grid) + 0.5) / grid * (box.hi[0] - box.lo[0])
    v = box.lo[1] + (np.arange(grid) + 0.5) / grid * (box.hi[1] - box.lo[1])
    uu, vv = np.meshgrid(u, v)
    lift = max(height, 1e-9)
    local = np.column_stack([uu.ravel(), vv.ravel(), np.full(uu.size, box.hi[2] + lift)])
    origins = frame.to_world(local)
    dirs = np.broadcast_to(-frame.up_vec, origins.shape).copy()
    index = build_bvh(mesh) if index is None else index
    t, tri = index.ray_cast_many(origins, dirs)
    hit_z = box.hi[2] + lift - t
    covered = (tri >= 0) & (hit_z >= box.hi[2] - band * height)
    return float(covered.mean())


def add_countertop(mesh: TriMesh, frame: Frame | None = None, grid: int = COUNTER_GRID,
                   slab: float = COUNTER_HEIGHT) -> TriMesh:
    """Append a closed slab over the footprint when less than half of the top is covered."""
    if mesh.n_triangles == 0:
        raise EmptyMesh("mesh has no triangles")
    frame = frame or Frame()
    if top_coverage(mesh, frame, grid) >= COUNTER_COVERAGE:
        return mesh.copy()
    box = aabb_in_frame(mesh.vertices, frame)
    verts, tris = _prism(_rect(box.lo[0], box.hi[0], box.lo[1], box.hi[1]), box.hi[2] - slab, box.hi[2])
    world = frame.to_world(verts)
    if np.linalg.det(frame.matrix) < 0:
        tris = tris[:, ::-1].copy()
    n = len(world)
    colors = None if mesh.colors is None else np.tile(mesh.colors.mean(axis=0).round().astype(np.uint8), (n, 1))
    uvs = None if mesh.uvs is None else np.tile(mesh.uvs.mean(axis=0), (n, 1))
    top = TriMesh(world, tris, colors=colors, uvs=uvs)
    if mesh.normals is not None:
        top.normals = vertex_normals(top)
    return concatenate([mesh, top])


def _edges_hit(edges_from: TriMesh, target_index) -> bool:
    tris = edges_from.triangles
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    p, q = edges_from.vertices[e[:, 0]], edges_from.vertices[e[:, 1]]
    length = np.linalg.norm(q - p, axis=1)
    ok = length > 0
    p, q, length = p[ok], q[ok], length[ok]
    _, tri = target_index.ray_cast_many(p, (q - p) / length[:, None], 0.0, length)
    return bool((tri >= 0).any())


def meshes_collide(a: TriMesh, b: TriMesh) -> bool:
    """True if any edge of one mesh crosses a triangle of the other (touching counts)."""
    if a.n_triangles == 0 or b.n_triangles == 0:
        return False
    return _edges_hit(a, build_bvh(b)) or _edges_hit(b, build_bvh(a))
