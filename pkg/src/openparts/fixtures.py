"""Procedural furniture with exact ground-truth parts and motions.

Objects are modelled in frame coordinates (x right, y front, z up) with the
front of the carcass at y = 0, then mapped into world space through the
object frame. Every panel is a closed box, so the meshes are exact and the
ground-truth hinge lines are known analytically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assets_io.types import MotionSpec, MotionType, PartInstance, PartLabel, PartSegmentation
from .geometry import Frame, TriMesh, box_mesh, concatenate, prism_mesh

PANEL = 0.018
FRONT_THICKNESS = 0.02
GAP = 0.003
KNOB = 0.03


@dataclass
class Fixture:
    name: str
    mesh: TriMesh
    seg: PartSegmentation
    frame: Frame
    kind: str
    extras: dict = field(default_factory=dict)


@dataclass
class _Part:
    label: PartLabel
    meshes: list
    motion: tuple | None  # (type, axis, origin) in local coordinates


class _Builder:
    def __init__(self) -> None:
        self.base: list[TriMesh] = []
        self.parts: list[_Part] = []

    def panel(self, lo, hi) -> None:
        self.base.append(box_mesh(lo, hi))

    def wall(self, p, q, thickness: float, z0: float, z1: float, outward) -> None:
        """Vertical wall whose inner face runs along p-q, thickened toward ``outward``."""
        p, q = np.asarray(p, float), np.asarray(q, float)
        d = q - p
        n = np.array([d[1], -d[0]]) / np.hypot(*d)
        if n @ np.asarray(outward, float) < 0:
            n = -n
        self.base.append(prism_mesh([p, q, q + n * thickness, p + n * thickness], z0, z1))

    def part(self, label: PartLabel, meshes, motion) -> None:
        self.parts.append(_Part(label, meshes, motion))

    def build(self, name: str, kind: str, frame: Frame, transform=None, **extras) -> Fixture:
        meshes, owners = [], []
        for m in self.base:
            meshes.append(m)
            owners.append(-1)
        for k, p in enumerate(self.parts):
            for m in p.meshes:
                meshes.append(m)
                owners.append(k)
        tri_owner = np.concatenate([np.full(m.n_triangles, o) for m, o in zip(meshes, owners)])
        mesh = concatenate(meshes)
        rot = frame.matrix  # local row vectors times this give world coordinates
        scale, shift = 1.0, np.zeros(3)
        if transform is not None:
            scale, shift = transform
        mesh = TriMesh(mesh.vertices @ rot * scale + shift, mesh.triangles)
        parts = []
        counters: dict[str, int] = {}
        for k, p in enumerate(self.parts):
            motion = None
            if p.motion is not None:
                mtype, axis, origin = p.motion
                axis_w = np.asarray(axis, float) @ rot
                origin_w = None if origin is None else np.asarray(origin, float) @ rot * scale + shift
                motion = MotionSpec(mtype, tuple(axis_w / np.linalg.norm(axis_w)),
                                    None if origin_w is None else tuple(origin_w))
            idx = counters.get(p.label.value, 0)
            counters[p.label.value] = idx + 1
            parts.append(PartInstance(f"{p.label.value}_{idx}", p.label, np.flatnonzero(tri_owner == k), 1.0, motion))
        return Fixture(name, mesh, PartSegmentation(mesh.n_triangles, parts), frame, kind, dict(extras))


def _outward_axis(axis, origin, center, facing) -> np.ndarray:
    axis = np.asarray(axis, float)
    if np.cross(axis, np.asarray(center) - np.asarray(origin)) @ np.asarray(facing, float) < 0:
        axis = -axis
    return axis


def _carcass(b: _Builder, W: float, D: float, H: float, top: bool = True, back: bool = True,
             bottom: bool = True) -> None:
    t = PANEL
    b.panel((0, -D, 0), (t, 0, H))
    b.panel((W - t, -D, 0), (W, 0, H))
    if back:
        b.panel((t, -D, 0), (W - t, -D + t, H))
    if bottom:
        b.panel((t, -D + (t if back else 0), 0), (W - t, 0, t))
    if top:
        b.panel((t, -D + (t if back else 0), H - t), (W - t, 0, H))


def _drawer(b: _Builder, x0: float, x1: float, z0: float, z1: float, knob: bool = True) -> None:
    """Inset drawer front filling the opening [x0, x1] x [z0, z1] with a small gap."""
    lo = (x0 + GAP, -FRONT_THICKNESS, z0 + GAP)
    hi = (x1 - GAP, 0.0, z1 - GAP)
    meshes = [box_mesh(lo, hi)]
    if knob:
        cx, cz = (x0 + x1) / 2, (z0 + z1) / 2
        w = min(0.08, 0.3 * (x1 - x0))
        meshes.append(box_mesh((cx - w / 2, 0.0, cz - 0.01), (cx + w / 2, KNOB, cz + 0.01)))
    b.part(PartLabel.DRAWER, meshes, (MotionType.PRISMATIC, (0.0, 1.0, 0.0), None))


def _door(b: _Builder, x0: float, x1: float, z0: float, z1: float, handle: str | None, hinge: str) -> None:
    """Overlay door in front of the carcass (y in [0, FRONT_THICKNESS]) hinged on its back edge."""
    ft = FRONT_THICKNESS
    meshes = [box_mesh((x0, 0.0, z0), (x1, ft, z1))]
    w, h = x1 - x0, z1 - z0
    cx, cz = (x0 + x1) / 2, (z0 + z1) / 2
    if handle is not None:
        inset = min(0.05, 0.15 * w, 0.15 * h)
        hx = {"left": x0 + inset, "right": x1 - inset, "top": cx, "center": cx}[handle]
        hz = z1 - inset if handle == "top" else cz
        meshes.append(box_mesh((hx - 0.01, ft, hz - 0.04), (hx + 0.01, ft + KNOB, hz + 0.04)))
    if hinge == "left":
        axis, origin = (0, 0, 1), (x0, 0.0, cz)
    elif hinge == "right":
        axis, origin = (0, 0, 1), (x1, 0.0, cz)
    else:  # bottom
        axis, origin = (1, 0, 0), (cx, 0.0, z0)
    center = (cx, ft / 2, cz)
    axis = _outward_axis(axis, origin, center, (0, 1, 0))
    b.part(PartLabel.DOOR, meshes, (MotionType.REVOLUTE, tuple(axis), origin))


def dresser(n_drawers: int, W: float = 0.8, D: float = 0.5, H: float = 1.0, columns: int = 1,
            back: bool = True, frame: Frame | None = None, name: str | None = None) -> Fixture:
    b = _Builder()
    t = PANEL
    _carcass(b, W, D, H, back=back)
    inner_lo, inner_hi = t, W - t
    col_edges = np.linspace(inner_lo, inner_hi, columns + 1)
    if columns > 1:
        for x in col_edges[1:-1]:
            b.panel((x - t / 2, -D + (t if back else 0), t), (x + t / 2, 0, H - t))
    rows = int(np.ceil(n_drawers / columns))
    z_edges = np.linspace(t, H - t, rows + 1)
    for z in z_edges[1:-1]:
        b.panel((t, -FRONT_THICKNESS, z - t / 2), (W - t, 0, z + t / 2))
    made = 0
    for r in range(rows):
        for c in range(columns):
            if made == n_drawers:
                # fill unused slots with a fixed panel
                b.panel((col_edges[c] + GAP, -FRONT_THICKNESS, z_edges[r] + GAP),
                        (col_edges[c + 1] - GAP, 0, z_edges[r + 1] - GAP))
                continue
            x0 = col_edges[c] + (t / 2 if c > 0 else 0)
            x1 = col_edges[c + 1] - (t / 2 if c < columns - 1 else 0)
            z0 = z_edges[r] + (t / 2 if r > 0 else 0)
            z1 = z_edges[r + 1] - (t / 2 if r < rows - 1 else 0)
            _drawer(b, x0, x1, z0, z1)
            made += 1
    return b.build(name or f"dresser_{n_drawers}x{columns}", "dresser", frame or Frame(),
                   depth=D - t - FRONT_THICKNESS if back else D - FRONT_THICKNESS)


def door_cabinet(handles, W: float = 0.6, D: float = 0.45, H: float = 0.8,
                 frame: Frame | None = None, name: str | None = None) -> Fixture:
    """Cabinet with one or two overlay doors.

    ``handles`` is a string for a single door ("left", "right", "top" or
    "none") or a pair for double doors. Doors hinge opposite their handle;
    a top handle makes a flap hinged at the bottom.
    """
    b = _Builder()
    _carcass(b, W, D, H)
    b.panel((PANEL, -D + PANEL, H / 2 - PANEL / 2), (W - PANEL, -0.05, H / 2 + PANEL / 2))  # shelf
    if isinstance(handles, str):
        handle = None if handles == "none" else handles
        hinge = {"left": "right", "right": "left", "top": "bottom", None: "left"}[handle]
        _door(b, 0.0, W, 0.0, H, handle, hinge)
        tag = handles
    else:
        _door(b, 0.0, W / 2 - GAP, 0.0, H, "right", "left")
        _door(b, W / 2 + GAP, W, 0.0, H, "left", "right")
        tag = "double"
    return b.build(name or f"door_cabinet_{tag}", "door_cabinet", frame or Frame())


def chest(W: float = 0.9, D: float = 0.5, H: float = 0.45, handle: bool = True,
          frame: Frame | None = None, name: str | None = None) -> Fixture:
    b = _Builder()
    t = PANEL
    b.panel((0, -D, 0), (W, -D + t, H))
    b.panel((0, -t, 0), (W, 0, H))
    b.panel((0, -D + t, 0), (t, -t, H))
    b.panel((W - t, -D + t, 0), (W, -t, H))
    b.panel((t, -D + t, 0), (W - t, -t, t))
    lt = 0.025
    meshes = [box_mesh((0, -D, H), (W, 0, H + lt))]
    if handle:
        meshes.append(box_mesh((W / 2 - 0.05, -0.07, H + lt), (W / 2 + 0.05, -0.03, H + lt + KNOB)))
    origin = (W / 2, -D, H)
    axis = _outward_axis((1, 0, 0), origin, (W / 2, -D / 2, H + lt / 2), (0, 0, 1))
    b.part(PartLabel.LID, meshes, (MotionType.REVOLUTE, tuple(axis), origin))
    return b.build(name or ("chest" if handle else "chest_plain"), "chest", frame or Frame())


def corner_cabinet(W: float = 0.8, H: float = 0.9, center_depth: float = 0.8, side_depth: float = 0.4,
                   frame: Frame | None = None, name: str = "corner_cabinet") -> Fixture:
    """Cabinet with a V-shaped back and a single drawer.

    The inner back surface is placed so that the probes behind the drawer
    front measure ``center_depth`` at the middle and ``side_depth`` at 40% of
    the front width to either side.
    """
    b = _Builder()
    t, ft = PANEL, FRONT_THICKNESS
    x0, x1 = t, W - t
    fx0, fx1 = x0 + GAP, x1 - GAP
    wf = fx1 - fx0
    xc = (fx0 + fx1) / 2
    slope = (center_depth - side_depth) / (SIDE_PROBE * wf)

    def y_back(x):
        return -ft - (center_depth - slope * abs(x - xc))

    y_edge = y_back(x0)
    b.panel((0, y_edge - t, 0), (t, 0, H))
    b.panel((W - t, y_edge - t, 0), (W, 0, H))
    b.wall((x0, y_edge), (xc, y_back(xc)), t, 0, H, (0, -1))
    b.wall((xc, y_back(xc)), (x1, y_edge), t, 0, H, (0, -1))
    peak = y_back(xc)
    floor = [(x0, 0), (x1, 0), (x1, y_edge), (xc, peak), (x0, y_edge)]
    b.base.append(prism_mesh(floor, 0, t))
    b.base.append(prism_mesh(floor, H - t, H))
    _drawer(b, x0, x1, t, H - t)
    return b.build(name, "corner", frame or Frame(), depth=center_depth)


SIDE_PROBE = 0.4


def cube(size: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    c = np.asarray(center, float)
    return box_mesh(c - size / 2, c + size / 2)


def cube_in_cube() -> TriMesh:
    return concatenate([cube(1.0), cube(0.4)])


def open_cabinet_with_shelf(W: float = 0.6, D: float = 0.4, H: float = 0.8) -> TriMesh:
    """Carcass without doors plus a free-standing shelf visible through the front."""
    b = _Builder()
    _carcass(b, W, D, H)
    b.panel((PANEL, -D + PANEL, H / 2 - PANEL / 2), (W - PANEL, -0.02, H / 2 + PANEL / 2))
    return concatenate(b.base)


def closed_cabinet_with_hidden_box(W: float = 0.6, D: float = 0.4, H: float = 0.8) -> TriMesh:
    b = _Builder()
    _carcass(b, W, D, H)
    b.panel((0, 0, 0), (W, FRONT_THICKNESS, H))
    b.panel((0.2, -0.3, 0.2), (0.4, -0.1, 0.4))
    return concatenate(b.base)


def missing_top_cabinet(W: float = 0.6, D: float = 0.45, H: float = 0.8) -> TriMesh:
    b = _Builder()
    _carcass(b, W, D, H, top=False)
    b.panel((0, 0, 0), (W, FRONT_THICKNESS, H - 0.1))
    return concatenate(b.base)


def _yaw_frame(yaw: float) -> Frame:
    c, s = np.cos(yaw), np.sin(yaw)
    return Frame((0.0, 0.0, 1.0), (c, s, 0.0))


def motion_suite() -> list[Fixture]:
    """At least thirty objects spanning drawers, doors, flaps and lids."""
    out = []
    for n in range(1, 7):
        out.append(dresser(n, H=0.25 + 0.2 * n))
    for n in (2, 4, 6):
        out.append(dresser(n, W=1.2, H=0.3 * (n // 2) + 0.2, columns=2))
    out.append(dresser(3, back=False, name="open_back_dresser"))
    sizes = [(0.6, 0.45, 0.8), (0.45, 0.4, 1.6), (0.9, 0.5, 0.6)]
    for k, (W, D, H) in enumerate(sizes):
        for handle in ("left", "right", "top"):
            out.append(door_cabinet(handle, W, D, H, name=f"door_{handle}_{k}"))
        out.append(door_cabinet(("right", "left"), W * 1.5, D, H, name=f"double_door_{k}"))
    out.append(door_cabinet("none", name="door_plain"))
    for k, (W, D, H) in enumerate([(0.9, 0.5, 0.45), (1.2, 0.6, 0.5), (0.6, 0.4, 0.35)]):
        out.append(chest(W, D, H, name=f"chest_{k}"))
    out.append(chest(handle=False))
    out.append(corner_cabinet())
    out.append(dresser(4, frame=_yaw_frame(0.7), name="dresser_rotated"))
    out.append(door_cabinet("right", frame=_yaw_frame(-1.1), name="door_rotated"))
    return out


def interior_suite() -> list[Fixture]:
    """Drawer-bearing objects for interior completion."""
    out = [dresser(n, H=0.25 + 0.2 * n) for n in range(1, 7)]
    out.append(dresser(4, W=1.2, H=0.8, columns=2))
    out.append(dresser(3, back=False, name="open_back_dresser"))
    out.append(dresser(2, frame=_yaw_frame(0.4), name="dresser_rotated"))
    out.append(corner_cabinet())
    return out
