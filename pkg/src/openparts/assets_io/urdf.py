"""URDF 1.0 export of articulated objects, plus a small parser for round-trip checks."""
from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import IoError, ParseError
from .meshes import save_mesh
from .types import ArticulatedObject, MotionSpec, MotionType

REVOLUTE_RANGE = (0.0, math.pi / 2)
PRISMATIC_TRAVEL = 0.9
EFFORT = 100.0
VELOCITY = 1.0


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def default_range(motion: MotionSpec, part_vertices: np.ndarray) -> tuple[float, float]:
    """Range used when a motion carries none: quarter turn, or 0.9 of the part depth along the axis."""
    if motion.range is not None:
        return motion.range
    if motion.motion_type is MotionType.REVOLUTE:
        return REVOLUTE_RANGE
    proj = part_vertices @ motion.axis_vec
    depth = float(proj.max() - proj.min()) if len(proj) else 0.0
    return (0.0, PRISMATIC_TRAVEL * depth)


def _link(robot: ET.Element, name: str, mesh_file: str, offset=(0.0, 0.0, 0.0)) -> None:
    link = ET.SubElement(robot, "link", name=name)
    for tag in ("visual", "collision"):
        el = ET.SubElement(link, tag)
        ET.SubElement(el, "origin", xyz=_fmt(offset), rpy="0 0 0")
        geom = ET.SubElement(el, "geometry")
        ET.SubElement(geom, "mesh", filename=mesh_file)


def export_urdf(obj: ArticulatedObject, out_dir, name: str = "object") -> dict:
    """Write ``<name>.urdf`` plus one OBJ per link; returns a manifest of written files.

    The base link sits at the world origin, so joint frames are expressed in
    object coordinates directly. Revolute joints are placed at the hinge
    origin and their child visuals are shifted back so meshes stay in place.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    written = []
    robot = ET.Element("robot", name=name)
    base_file = f"{name}_base.obj"
    written.append(save_mesh(obj.base, out / base_file))
    _link(robot, "base", base_file)
    for k, part in enumerate(obj.parts):
        link_name = f"{part.label.value}_{k}"
        mesh_file = f"{name}_{link_name}.obj"
        written.append(save_mesh(part.mesh, out / mesh_file))
        m = part.motion
        origin = np.zeros(3) if m.origin is None else np.asarray(m.origin)
        _link(robot, link_name, mesh_file, offset=-origin)
        joint = ET.SubElement(robot, "joint", name=f"joint_{k}", type=m.motion_type.value)
        ET.SubElement(joint, "origin", xyz=_fmt(origin), rpy="0 0 0")
        ET.SubElement(joint, "parent", link="base")
        ET.SubElement(joint, "child", link=link_name)
        ET.SubElement(joint, "axis", xyz=_fmt(m.axis))
        lo, hi = default_range(m, part.mesh.vertices)
        ET.SubElement(joint, "limit", lower=repr(lo), upper=repr(hi), effort=repr(EFFORT), velocity=repr(VELOCITY))
    ET.indent(robot)
    urdf_path = out / f"{name}.urdf"
    try:
        ET.ElementTree(robot).write(urdf_path, encoding="utf-8", xml_declaration=True)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return {"urdf": str(urdf_path), "meshes": [str(p) for p in written]}


@dataclass
class UrdfJoint:
    name: str
    joint_type: str
    parent: str
    child: str
    origin: tuple[float, float, float]
    axis: tuple[float, float, float]
    lower: float | None
    upper: float | None


def _floats(text: str | None, default) -> tuple[float, ...]:
    if text is None:
        return default
    return tuple(float(x) for x in text.split())


def parse_urdf(path) -> list[UrdfJoint]:
    try:
        root = ET.parse(path).getroot()
    except (OSError, ET.ParseError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    joints = []
    for j in root.findall("joint"):
        origin = j.find("origin")
        axis = j.find("axis")
        limit = j.find("limit")
        joints.append(UrdfJoint(
            j.get("name"), j.get("type"),
            j.find("parent").get("link"), j.find("child").get("link"),
            _floats(None if origin is None else origin.get("xyz"), (0.0, 0.0, 0.0)),
            _floats(None if axis is None else axis.get("xyz"), (1.0, 0.0, 0.0)),
            None if limit is None else float(limit.get("lower", 0.0)),
            None if limit is None else float(limit.get("upper", 0.0)),
        ))
    return joints
