"""Part annotation / prediction JSON.

Schema::

    {"frame": {"up": [x, y, z], "front": [x, y, z]},
     "parts": [{"id": str, "label": "drawer" | "door" | "lid",
                "triangles": [int, ...], "confidence": float,
                "motion": {"type": "prismatic" | "revolute", "axis": [x, y, z],
                           "origin": [x, y, z], "range": [lo, hi]}}]}

``frame``, ``confidence`` and ``motion`` are optional; triangles not listed by
any part belong to the base.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import IndexOutOfRange, InvalidMotion, IoError, ParseError, SchemaError
from ..geometry import Frame, TriMesh
from .types import MotionSpec, PartInstance, PartLabel, PartSegmentation

DEFAULT_FRAME = Frame()


def _vec3(value, what: str) -> tuple[float, float, float]:
    try:
        vec = tuple(float(x) for x in value)
    except (TypeError, ValueError):
        raise SchemaError(f"{what} must be a list of 3 numbers") from None
    if len(vec) != 3:
        raise SchemaError(f"{what} must have 3 components")
    return vec


def motion_from_dict(data: dict) -> MotionSpec:
    if "type" not in data or "axis" not in data:
        raise InvalidMotion("motion needs 'type' and 'axis'")
    axis = np.array(_vec3(data["axis"], "motion.axis"))
    norm = np.linalg.norm(axis)
    if norm == 0:
        raise InvalidMotion("zero motion axis")
    origin = data.get("origin")
    rng = data.get("range")
    try:
        return MotionSpec(
            data["type"],
            tuple(axis / norm),
            None if origin is None else _vec3(origin, "motion.origin"),
            None if rng is None else (float(rng[0]), float(rng[1])),
        )
    except ValueError as exc:
        if isinstance(exc, InvalidMotion):
            raise
        raise SchemaError(str(exc)) from exc


def motion_to_dict(m: MotionSpec) -> dict:
    out = {"type": m.motion_type.value, "axis": list(m.axis)}
    if m.origin is not None:
        out["origin"] = list(m.origin)
    if m.range is not None:
        out["range"] = list(m.range)
    return out


def frame_from_dict(data: dict | None) -> Frame:
    if not data:
        return DEFAULT_FRAME
    up = np.array(_vec3(data.get("up", DEFAULT_FRAME.up), "frame.up"))
    front = np.array(_vec3(data.get("front", DEFAULT_FRAME.front), "frame.front"))
    try:
        return Frame(tuple(up / np.linalg.norm(up)), tuple(front / np.linalg.norm(front)))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def frame_to_dict(frame: Frame) -> dict:
    return {"up": list(frame.up), "front": list(frame.front)}


def segmentation_from_dict(data: dict, n_triangles: int) -> tuple[PartSegmentation, Frame]:
    if not isinstance(data, dict):
        raise SchemaError("annotation must be a JSON object")
    frame = frame_from_dict(data.get("frame"))
    parts = []
    seen_ids = set()
    for k, entry in enumerate(data.get("parts", [])):
        if not isinstance(entry, dict):
            raise SchemaError(f"part {k} is not an object")
        pid = str(entry.get("id", f"part{k}"))
        if pid in seen_ids:
            raise SchemaError(f"duplicate part id {pid!r}")
        seen_ids.add(pid)
        label = PartLabel.parse(entry.get("label"))
        if not label.openable:
            raise SchemaError(f"part {pid!r}: 'base' is not an openable label")
        try:
            tris = np.asarray(entry.get("triangles", []), dtype=np.int64)
        except (TypeError, ValueError):
            raise SchemaError(f"part {pid!r}: triangles must be integers") from None
        if tris.size and (tris.min() < 0 or tris.max() >= n_triangles):
            raise IndexOutOfRange(f"part {pid!r}: triangle index outside [0, {n_triangles})")
        motion = entry.get("motion")
        parts.append(PartInstance(
            pid, label, tris, float(entry.get("confidence", 1.0)),
            None if motion is None else motion_from_dict(motion),
        ))
    return PartSegmentation(n_triangles, parts), frame


def segmentation_to_dict(seg: PartSegmentation, frame: Frame | None = None) -> dict:
    parts = []
    for p in seg.parts:
        entry = {
            "id": p.id,
            "label": p.label.value,
            "triangles": [int(t) for t in p.triangle_ids],
            "confidence": float(p.confidence),
        }
        if p.motion is not None:
            entry["motion"] = motion_to_dict(p.motion)
        parts.append(entry)
    out: dict = {"parts": parts}
    if frame is not None:
        out["frame"] = frame_to_dict(frame)
    return out


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc


def write_json(data, path) -> Path:
    """Deterministic JSON output: sorted keys, fixed separators, trailing newline."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return path


def load_annotation(path, mesh: TriMesh) -> tuple[PartSegmentation, Frame]:
    return segmentation_from_dict(read_json(path), mesh.n_triangles)


def save_annotation(seg: PartSegmentation, frame: Frame | None, path) -> Path:
    return write_json(segmentation_to_dict(seg, frame), path)
