"""Lift image-view and point-cloud instance predictions onto mesh triangles and reconcile overlaps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assets_io.predictions import PointCloudPrediction, ViewPrediction
from .assets_io.types import MotionSpec, MotionType, PartInstance, PartLabel, PartSegmentation
from .errors import InvalidCamera, InvalidMotion, ShapeMismatch
from .geometry import Frame, TriMesh, build_bvh
from .sampling import (
    BASE,
    InstanceInfo,
    PointLabels,
    SampledPointCloud,
    knn_propagate,
    segmentation_from_instances,
    triangle_vote,
)

BACKGROUND = -1
CONFIDENCE_THRESHOLD = 0.9
MERGE_IOU = 0.8
PIXEL_COVERAGE = 0.5


def _check_rotation(rot: np.ndarray) -> None:
    if rot.shape != (3, 3) or not np.all(np.isfinite(rot)):
        raise InvalidCamera("rotation must be a finite 3x3 matrix")
    if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6) or np.linalg.det(rot) < 0:
        raise InvalidCamera("rotation must be a proper orthonormal matrix")


def _look_at_rotation(eye, target, up) -> np.ndarray:
    """Camera-to-world rotation with columns (x right, y down, z forward)."""
    z = np.asarray(target, dtype=np.float64) - np.asarray(eye, dtype=np.float64)
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, np.roll(up, 1))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


@dataclass
class PinholeCamera:
    """OpenCV-style pinhole camera: +z forward, +y down, pixel centers at half-integers."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # camera-to-world
    position: np.ndarray

    def __post_init__(self) -> None:
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(math.isfinite(v) for v in vals) or self.fx <= 0 or self.fy <= 0:
            raise InvalidCamera("focal lengths must be positive and finite")
        _check_rotation(self.rotation)

    @classmethod
    def look_at(cls, eye, target, up, fov_deg: float, width: int, height: int) -> PinholeCamera:
        if not 0 < fov_deg < 180:
            raise InvalidCamera("field of view must lie in (0, 180) degrees")
        f = 0.5 * width / math.tan(math.radians(fov_deg) / 2)
        return cls(f, f, width / 2, height / 2, _look_at_rotation(eye, target, up), np.asarray(eye, dtype=np.float64))

    def rays(self, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
        u, v = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
        d_cam = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1).reshape(-1, 3)
        d = d_cam @ self.rotation.T
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return np.broadcast_to(self.position, d.shape).copy(), d

    def to_dict(self) -> dict:
        return {"type": "pinhole", "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "rotation": self.rotation.tolist(), "position": self.position.tolist()}


@dataclass
class OrthoCamera:
    """Parallel projection looking along ``direction``; the image spans ``extent`` x ``extent``."""

    center: np.ndarray
    direction: np.ndarray
    up: np.ndarray
    extent: float

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        self.direction = self.direction / np.linalg.norm(self.direction)
        self.up = np.asarray(self.up, dtype=np.float64).reshape(3)
        if not (self.extent > 0 and math.isfinite(self.extent)):
            raise InvalidCamera("orthographic extent must be positive")

    def rays(self, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
        rot = _look_at_rotation(self.center, self.center + self.direction, self.up)
        u = (np.arange(width) + 0.5) / width - 0.5
        v = (np.arange(height) + 0.5) / height - 0.5
        uu, vv = np.meshgrid(u * self.extent, v * self.extent)
        origins = self.center + uu.reshape(-1, 1) * rot[:, 0] + vv.reshape(-1, 1) * rot[:, 1]
        return origins, np.broadcast_to(self.direction, origins.shape).copy()


def camera_from_dict(data: dict) -> PinholeCamera:
    try:
        if "eye" in data:
            return PinholeCamera.look_at(data["eye"], data["target"], data.get("up", (0, 0, 1)),
                                         float(data["fov"]), int(data["width"]), int(data["height"]))
        return PinholeCamera(float(data["fx"]), float(data["fy"]), float(data["cx"]), float(data["cy"]),
                             np.asarray(data["rotation"], dtype=np.float64), np.asarray(data["position"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidCamera):
            raise
        raise InvalidCamera(f"bad camera description: {exc}") from exc


def default_cameras(mesh: TriMesh, frame: Frame, n_views: int = 3, fov_deg: float = 50.0,
                    resolution: tuple[int, int] = (256, 256)) -> list[PinholeCamera]:
    """Views spread over the frontal hemisphere, slightly above the object."""
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2
    radius = 0.5 * float(np.linalg.norm(hi - lo))
    dist = radius / math.sin(math.radians(fov_deg) / 2) * 1.05
    cams = []
    for k in range(n_views):
        yaw = 0.0 if n_views == 1 else math.radians(-45 + 90 * k / (n_views - 1))
        d = math.cos(yaw) * frame.front_vec + math.sin(yaw) * frame.right_vec
        d = d * math.cos(math.radians(25)) + frame.up_vec * math.sin(math.radians(25))
        cams.append(PinholeCamera.look_at(center + dist * d, center, frame.up_vec, fov_deg, *resolution))
    return cams


def render_index_maps(mesh: TriMesh, cameras: Sequence, resolution: tuple[int, int], index=None) -> list[np.ndarray]:
    """Per-view (H, W) images holding the id of the first triangle hit, or ``BACKGROUND``."""
    width, height = (int(x) for x in resolution)
    if width <= 0 or height <= 0:
        raise InvalidCamera("resolution must be positive")
    if mesh.n_triangles == 0:
        return [np.full((height, width), BACKGROUND, dtype=np.int64) for _ in cameras]
    index = build_bvh(mesh) if index is None else index
    maps = []
    for cam in cameras:
        o, d = cam.rays(width, height)
        _, tri = index.ray_cast_many(o, d)
        maps.append(tri.reshape(height, width))
    return maps


@dataclass
class ViewMask:
    view_id: str
    label: PartLabel
    confidence: float
    covered_triangles: dict[int, int]
    mask_index: int = 0

    @property
    def order_key(self) -> tuple:
        return (-self.confidence, self.view_id, self.mask_index)


def lift_view_masks(index_map: np.ndarray, prediction: ViewPrediction,
                    threshold: float = CONFIDENCE_THRESHOLD,
                    coverage: float = PIXEL_COVERAGE) -> list[ViewMask]:
    """Project confident image masks onto the triangles visible in ``index_map``.

    Masks need confidence strictly above ``threshold``. A triangle counts as
    covered when at least ``coverage`` of its visible pixels fall in the mask.
    """
    index_map = np.asarray(index_map)
    visible = index_map[index_map >= 0]
    n_bins = int(visible.max()) + 1 if visible.size else 0
    total = np.bincount(visible, minlength=n_bins)
    out = []
    for k, m in enumerate(prediction.masks):
        if m.bitmap.shape != index_map.shape:
            raise ShapeMismatch(f"mask {k} of view {prediction.view_id!r} is {m.bitmap.shape}, "
                                f"index map is {index_map.shape}")
        if not m.confidence > threshold:
            continue
        hit = index_map[m.bitmap & (index_map >= 0)]
        counts = np.bincount(hit, minlength=n_bins)
        tris = np.flatnonzero((counts > 0) & (counts >= coverage * total))
        if tris.size == 0:
            continue
        out.append(ViewMask(prediction.view_id, m.label, m.confidence,
                            {int(t): int(counts[t]) for t in tris}, k))
    return out


def reconcile_view_masks(masks: Sequence[ViewMask], mesh: TriMesh, merge_iou: float = MERGE_IOU) -> PartSegmentation:
    """Greedy merge of projected masks in descending confidence.

    A mask whose area-weighted IoU with an accepted part exceeds
    ``merge_iou`` joins that part; otherwise it becomes a new part. Triangles
    already owned by an earlier (more confident) part stay with it.
    """
    areas = mesh.triangle_areas()
    owner = np.full(mesh.n_triangles, -1, dtype=np.int64)
    parts: list[dict] = []
    for mask in sorted(masks, key=lambda m: m.order_key):
        tris = np.fromiter(mask.covered_triangles, dtype=np.int64)
        if tris.size == 0:
            continue
        if tris.max() >= mesh.n_triangles or tris.min() < 0:
            raise ShapeMismatch("mask references a triangle outside the mesh")
        in_mask = np.zeros(mesh.n_triangles, dtype=bool)
        in_mask[tris] = True
        best, best_iou = -1, -1.0
        for k in range(len(parts)):
            in_part = owner == k
            union = areas[in_mask | in_part].sum()
            iou = areas[in_mask & in_part].sum() / union if union > 0 else 0.0
            if iou > best_iou:
                best, best_iou = k, iou
        free = in_mask & (owner < 0)
        if best >= 0 and best_iou > merge_iou:
            owner[free] = best
        elif free.any():
            owner[free] = len(parts)
            parts.append({"label": mask.label, "confidence": mask.confidence})
    instances = [
        PartInstance(f"part_{k}", p["label"], np.flatnonzero(owner == k), p["confidence"])
        for k, p in enumerate(parts)
    ]
    return PartSegmentation(mesh.n_triangles, instances)


def fuse_views(mesh: TriMesh, cameras: Sequence, predictions: Sequence[ViewPrediction],
               resolution: tuple[int, int], threshold: float = CONFIDENCE_THRESHOLD,
               merge_iou: float = MERGE_IOU, coverage: float = PIXEL_COVERAGE) -> PartSegmentation:
    """Render index maps, lift every view's masks, reconcile into one segmentation."""
    if len(cameras) != len(predictions):
        raise ShapeMismatch("need one camera per view prediction")
    maps = render_index_maps(mesh, cameras, resolution)
    masks = []
    for index_map, pred in zip(maps, predictions):
        masks.extend(lift_view_masks(index_map, pred, threshold, coverage))
    return reconcile_view_masks(masks, mesh, merge_iou)


def reconcile_pc_masks(prediction: PointCloudPrediction, cloud: SampledPointCloud, mesh: TriMesh,
                       merge_iou: float = MERGE_IOU, dense: SampledPointCloud | None = None,
                       k: int = 3) -> PartSegmentation:
    """Resolve overlapping point-cloud instances, then vote labels onto triangles.

    Instances whose point IoU with a more confident kept instance exceeds
    ``merge_iou`` are dropped; otherwise shared points go to the more
    confident one. When ``dense`` is given the labels are first carried to it
    with k-nearest-neighbor transfer and the vote runs on the dense cloud.
    """
    n = len(cloud)
    if prediction.n_points != n:
        raise ShapeMismatch(f"prediction indexes {prediction.n_points} points, cloud has {n}")
    order = sorted(range(len(prediction.instances)), key=lambda i: (-prediction.instances[i].confidence, i))
    owner = np.full(n, BASE, dtype=np.int64)
    kept: list[np.ndarray] = []
    table: list[InstanceInfo] = []
    for i in order:
        inst = prediction.instances[i]
        members = np.zeros(n, dtype=bool)
        members[inst.point_ids] = True
        if not members.any():
            continue
        if any(np.sum(members & other) / np.sum(members | other) > merge_iou for other in kept):
            continue
        owner[members & (owner == BASE)] = len(kept)
        kept.append(members)
        table.append(InstanceInfo(f"part_{len(table)}", inst.label, inst.confidence))
    labeled = SampledPointCloud(cloud.positions, cloud.normals, cloud.source_triangle, cloud.vertex_id,
                                PointLabels(owner, table))
    if dense is not None:
        target = SampledPointCloud(dense.positions, dense.normals, dense.source_triangle, dense.vertex_id,
                                   knn_propagate(labeled, dense, k))
    else:
        target = labeled
    return segmentation_from_instances(triangle_vote(mesh, target), table)


VERTICAL_COS = math.cos(math.radians(45.0))


def infer_labels_from_motion(instances: Sequence[tuple[object, MotionSpec, np.ndarray]], frame: Frame) -> list[PartLabel]:
    """Semantic labels for motion-only instance predictions.

    Prismatic parts are drawers. Revolute parts are doors when the axis is
    vertical (within 45 degrees of up) or the mean part normal is not
    vertical; the rest (horizontal axis, vertical normal) are lids.
    """
    up = frame.up_vec
    labels = []
    for _, motion, normal in instances:
        if motion is None or motion.axis is None:
            raise InvalidMotion("instance has no motion axis")
        if motion.motion_type is MotionType.PRISMATIC:
            labels.append(PartLabel.DRAWER)
            continue
        if abs(float(motion.axis_vec @ up)) >= VERTICAL_COS:
            labels.append(PartLabel.DOOR)
            continue
        n = np.asarray(normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        vertical_normal = norm > 0 and abs(float(n @ up)) / norm >= VERTICAL_COS
        labels.append(PartLabel.LID if vertical_normal else PartLabel.DOOR)
    return labels


def mean_normal(cloud: SampledPointCloud, point_ids) -> np.ndarray:
    return cloud.normals[np.asarray(point_ids, dtype=np.int64)].mean(axis=0)
