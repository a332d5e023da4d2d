"""Heuristic motion parameters for openable parts.

Motion type comes from per-label statistics. Prismatic parts slide along
their box front axis. Revolute parts hinge on an edge of the box face that
lines up with the base, on the side opposite the detected handle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .assets_io.annotations import read_json, write_json
from .assets_io.types import MotionSpec, MotionType, PartInstance, PartLabel, PartSegmentation
from .errors import DegenerateBox, EmptyInput, NotOpenable, SchemaError
from .geometry import Frame, OrientedBox, TriMesh, gravity_obb, segment_distance

log = logging.getLogger(__name__)

DEFAULT_BINS = 32
HANDLE_FRACTION = 0.02
FULL_SPAN = 0.5

RIGHT, FRONT, UP = OrientedBox.RIGHT, OrientedBox.FRONT, OrientedBox.UP
FRONT_FACE, BACK_FACE = 1, -1


@dataclass
class MotionTypeStats:
    counts: dict[PartLabel, dict[MotionType, int]]

    def __post_init__(self) -> None:
        clean = {}
        for label, by_type in self.counts.items():
            label = PartLabel.parse(label)
            row = {MotionType(t): int(n) for t, n in by_type.items()}
            if any(n < 0 for n in row.values()):
                raise SchemaError(f"negative motion count for {label.value}")
            if not any(row.values()):
                raise SchemaError(f"no motion counts for {label.value}")
            clean[label] = row
        self.counts = clean

    @classmethod
    def default(cls) -> MotionTypeStats:
        return cls({
            PartLabel.DRAWER: {MotionType.PRISMATIC: 1, MotionType.REVOLUTE: 0},
            PartLabel.DOOR: {MotionType.PRISMATIC: 0, MotionType.REVOLUTE: 1},
            PartLabel.LID: {MotionType.PRISMATIC: 0, MotionType.REVOLUTE: 1},
        })

    @classmethod
    def from_segmentations(cls, segs: Iterable[PartSegmentation]) -> MotionTypeStats:
        counts: dict[PartLabel, dict[MotionType, int]] = {}
        for seg in segs:
            for p in seg.parts:
                if p.motion is None:
                    continue
                row = counts.setdefault(p.label, {MotionType.PRISMATIC: 0, MotionType.REVOLUTE: 0})
                row[p.motion.motion_type] += 1
        return cls(counts)

    @classmethod
    def load(cls, path) -> MotionTypeStats:
        data = read_json(path)
        if not isinstance(data, dict):
            raise SchemaError("stats file must map labels to counts")
        return cls(data)

    def to_dict(self) -> dict:
        return {l.value: {t.value: n for t, n in row.items()} for l, row in self.counts.items()}

    def save(self, path) -> Path:
        return write_json(self.to_dict(), path)


_DEFAULT_STATS = MotionTypeStats.default()


def predict_motion_type(label: PartLabel, stats: MotionTypeStats | None = None) -> MotionType:
    """Most frequent motion type for ``label``; ties and unseen labels fall back to the defaults."""
    label = PartLabel.parse(label)
    if not label.openable:
        raise NotOpenable("the base part does not move")
    stats = stats or _DEFAULT_STATS
    row = stats.counts.get(label) or _DEFAULT_STATS.counts[label]
    p, r = row.get(MotionType.PRISMATIC, 0), row.get(MotionType.REVOLUTE, 0)
    if p == r:
        return predict_motion_type(label, _DEFAULT_STATS) if stats is not _DEFAULT_STATS else MotionType.REVOLUTE
    return MotionType.PRISMATIC if p > r else MotionType.REVOLUTE


def facing_axis(label: PartLabel) -> int:
    """Box axis the part opens toward: up for lids, front otherwise."""
    return UP if PartLabel.parse(label) is PartLabel.LID else FRONT


def predict_prismatic_axis(part_box: OrientedBox, object_centroid=None) -> np.ndarray:
    axis = part_box.front.copy()
    if object_centroid is not None:
        if float((part_box.center - np.asarray(object_centroid)) @ axis) < 0.0:
            axis = -axis
    return axis


def _face_edge_distance(part_box: OrientedBox, axis: int, sign: int, base_edges) -> float:
    total = 0.0
    for start, end, _, _ in part_box.face_edges(axis, sign):
        total += min(segment_distance(start, end, b0, b1) for b0, b1 in base_edges)
    return total


def select_face(part_box: OrientedBox, base_box: OrientedBox, axis: int = FRONT) -> int:
    """``FRONT_FACE`` or ``BACK_FACE``: whichever face's edges lie closer to the base box edges."""
    base_edges = base_box.edges()
    front = _face_edge_distance(part_box, axis, FRONT_FACE, base_edges)
    back = _face_edge_distance(part_box, axis, BACK_FACE, base_edges)
    tol = 1e-9 * max(part_box.diagonal, base_box.diagonal, 1e-300)
    return BACK_FACE if back < front - tol else FRONT_FACE


@dataclass
class HandleEstimate:
    region: str  # "raised", "concave" or "none"
    centroid: np.ndarray
    depth_profile: np.ndarray


def detect_handle(part_mesh: TriMesh, part_box: OrientedBox, bins: int = DEFAULT_BINS,
                  axis: int = FRONT, fraction: float = HANDLE_FRACTION) -> HandleEstimate:
    """Find a raised or recessed handle by binning vertices along the facing axis.

    The face slab is the most populated bin among those whose vertices span
    at least half the face in both lateral directions (frontmost on ties).
    Vertices strictly in front of it form a raised handle; failing that,
    vertices strictly between the rear-most occupied bin and the face slab
    form a recessed one. Either needs at least ``fraction`` of the vertices.
    The centroid also counts face-slab vertices under the handle footprint.
    """
    if part_mesh.n_vertices == 0:
        raise EmptyInput("part mesh has no vertices")
    if bins < 4:
        raise ValueError("need at least 4 bins")
    verts = np.unique(part_mesh.vertices, axis=0)
    local = part_box.to_local(verts)
    h = part_box.half_extents[axis]
    if h > 0:
        idx = np.floor((local[:, axis] + h) / (2 * h) * bins).astype(np.int64)
        idx = np.clip(idx, 0, bins - 1)
    else:
        idx = np.zeros(len(verts), dtype=np.int64)
    profile = np.bincount(idx, minlength=bins)
    lateral = [k for k in range(3) if k != axis]
    spans = np.zeros(bins, dtype=bool)
    for b in np.flatnonzero(profile):
        sel = local[idx == b]
        ok = True
        for k in lateral:
            width = 2 * part_box.half_extents[k]
            if width > 0 and (sel[:, k].max() - sel[:, k].min()) < FULL_SPAN * width:
                ok = False
        spans[b] = ok
    candidates = np.flatnonzero(spans) if spans.any() else np.flatnonzero(profile)
    face_bin = int(candidates[np.flatnonzero(profile[candidates] == profile[candidates].max())[-1]])
    need = fraction * len(verts)
    tol = 1e-9 * max(part_box.diagonal, 1e-300)

    def centroid(sel: np.ndarray) -> np.ndarray:
        # the handle's footprint on the face slab is where it attaches; count it too
        lat = local[:, lateral]
        lo, hi = lat[sel].min(axis=0) - tol, lat[sel].max(axis=0) + tol
        rim = (idx == face_bin) & np.all((lat >= lo) & (lat <= hi), axis=1)
        return verts[sel | rim].mean(axis=0)

    raised = idx > face_bin
    if raised.any() and raised.sum() >= need:
        return HandleEstimate("raised", centroid(raised), profile)
    back_bin = int(np.flatnonzero(profile)[0])
    recessed = (idx > back_bin) & (idx < face_bin)
    if recessed.any() and recessed.sum() >= need:
        return HandleEstimate("concave", centroid(recessed), profile)
    return HandleEstimate("none", part_box.center.copy(), profile)


def _ordered_edges(part_box: OrientedBox, axis: int, face: int):
    """Face edges in tie-break order: primary direction first (vertical for doors), then side -1, +1."""
    primary = RIGHT if axis == UP else UP
    edges = part_box.face_edges(axis, face)
    return sorted(edges, key=lambda e: (e[2] != primary, e[3]))


def predict_revolute_axis(part_box: OrientedBox, face: int, handle: HandleEstimate, label: PartLabel,
                          object_centroid, axis: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Hinge axis direction and origin on an edge of the selected face.

    With a handle, the edge farthest from it (distances measured in units of
    the face half-extents) wins. Without one, doors hinge on the vertical
    edge farther from the object's lateral center and lids on the back edge.
    The direction is signed so a positive rotation swings the part outward.
    """
    label = PartLabel.parse(label)
    axis = facing_axis(label) if axis is None else axis
    edges = _ordered_edges(part_box, axis, face)
    lateral = [k for k in range(3) if k != axis]
    if all(part_box.half_extents[k] <= 0 for k in lateral):
        raise DegenerateBox("selected face has zero extent")

    def across(edge) -> int:
        (c,) = [k for k in lateral if k != edge[2]]
        return c

    if handle.region != "none":
        local = part_box.to_local(handle.centroid)[0]
        scores = []
        for e in edges:
            c = across(e)
            h = part_box.half_extents[c]
            u = local[c] / h if h > 0 else 0.0
            scores.append(abs(e[3] - u) / 2.0)
        best = max(scores)
        chosen = next(e for e, s in zip(edges, scores) if s >= best - 1e-9)
    elif label is PartLabel.LID:
        chosen = next(e for e in edges if e[2] == RIGHT and e[3] == -1)
    else:
        u = float((np.asarray(object_centroid) - part_box.center) @ part_box.axes[RIGHT])
        side = 1 if u < -1e-9 * part_box.diagonal else -1
        chosen = next(e for e in edges if e[2] == UP and e[3] == side)
    start, end = chosen[0], chosen[1]
    length = np.linalg.norm(end - start)
    if length <= 0:
        raise DegenerateBox("hinge edge has zero length")
    direction = (end - start) / length
    origin = (start + end) / 2.0
    swing = np.cross(direction, part_box.center - origin)
    if float(swing @ part_box.axes[axis]) < 0.0:
        direction = -direction
    return direction, origin


def surface_centroid(mesh: TriMesh) -> np.ndarray:
    """Area-weighted surface centroid (vertex mean when the surface has no area)."""
    areas = mesh.triangle_areas()
    if not areas.sum() > 0:
        return mesh.vertices.mean(axis=0)
    a, b, c = mesh.corners()
    return ((a + b + c) / 3.0 * areas[:, None]).sum(axis=0) / areas.sum()


def predict_part_motion(part_mesh: TriMesh, label: PartLabel, base_box: OrientedBox, frame: Frame,
                        object_centroid, stats: MotionTypeStats | None = None,
                        bins: int = DEFAULT_BINS, fraction: float = HANDLE_FRACTION) -> MotionSpec:
    motion_type = predict_motion_type(label, stats)
    part_box = gravity_obb(part_mesh.vertices, frame)
    if motion_type is MotionType.PRISMATIC:
        axis = predict_prismatic_axis(part_box, object_centroid)
        return MotionSpec(MotionType.PRISMATIC, tuple(axis))
    ax = facing_axis(label)
    face = select_face(part_box, base_box, ax)
    handle = detect_handle(part_mesh, part_box, bins, ax, fraction)
    direction, origin = predict_revolute_axis(part_box, face, handle, label, object_centroid, ax)
    return MotionSpec(MotionType.REVOLUTE, tuple(direction), tuple(origin))


def predict_motion(seg: PartSegmentation, mesh: TriMesh, frame: Frame, stats: MotionTypeStats | None = None,
                   bins: int = DEFAULT_BINS, fraction: float = HANDLE_FRACTION,
                   diagnostics: list[str] | None = None) -> PartSegmentation:
    """Fill in a MotionSpec for every openable part; failing parts keep ``motion=None``."""
    if not seg.parts:
        return seg.copy()
    if seg.n_triangles != mesh.n_triangles:
        raise ValueError("segmentation does not match the mesh")
    base_ids = seg.base_triangles
    base_mesh = mesh.submesh(base_ids) if base_ids.size else mesh
    base_box = gravity_obb(base_mesh.vertices, frame)
    centroid = surface_centroid(mesh)
    parts = []
    for p in seg.parts:
        motion = None
        try:
            motion = predict_part_motion(mesh.submesh(p.triangle_ids), p.label, base_box, frame,
                                         centroid, stats, bins, fraction)
        except Exception as exc:  # one bad part must not sink the object
            msg = f"part {p.id}: motion prediction failed: {exc}"
            log.warning(msg)
            if diagnostics is not None:
                diagnostics.append(msg)
        parts.append(PartInstance(p.id, p.label, p.triangle_ids.copy(), p.confidence, motion))
    return PartSegmentation(seg.n_triangles, parts)
