from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidMotion, OverlapError, IndexOutOfRange, SchemaError
from ..geometry import Frame, TriMesh, UNIT_TOL


class PartLabel(str, enum.Enum):
    DRAWER = "drawer"
    DOOR = "door"
    LID = "lid"
    BASE = "base"

    @property
    def openable(self) -> bool:
        return self is not PartLabel.BASE

    @classmethod
    def parse(cls, value) -> PartLabel:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise SchemaError(f"unknown part label {value!r}") from None


OPENABLE = (PartLabel.DRAWER, PartLabel.DOOR, PartLabel.LID)


class MotionType(str, enum.Enum):
    PRISMATIC = "prismatic"
    REVOLUTE = "revolute"


@dataclass(frozen=True)
class MotionSpec:
    motion_type: MotionType
    axis: tuple[float, float, float]
    origin: tuple[float, float, float] | None = None
    range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        mt = MotionType(self.motion_type)
        object.__setattr__(self, "motion_type", mt)
        axis = tuple(float(x) for x in self.axis)
        if len(axis) != 3 or not all(math.isfinite(x) for x in axis):
            raise InvalidMotion("axis must be a finite 3-vector")
        if abs(math.sqrt(sum(x * x for x in axis)) - 1.0) > UNIT_TOL:
            raise InvalidMotion(f"axis must be unit length: {axis}")
        object.__setattr__(self, "axis", axis)
        if mt is MotionType.REVOLUTE and self.origin is None:
            raise InvalidMotion("revolute motion requires an origin")
        if mt is MotionType.PRISMATIC and self.origin is not None:
            raise InvalidMotion("prismatic motion carries no origin")
        if self.origin is not None:
            object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        if self.range is not None:
            lo, hi = (float(x) for x in self.range)
            object.__setattr__(self, "range", (lo, hi))

    @property
    def axis_vec(self) -> np.ndarray:
        return np.array(self.axis)

    def with_range(self, lo: float, hi: float) -> MotionSpec:
        return replace(self, range=(float(lo), float(hi)))


@dataclass(eq=False)
class PartInstance:
    id: str
    label: PartLabel
    triangle_ids: np.ndarray
    confidence: float = 1.0
    motion: MotionSpec | None = None

    def __post_init__(self) -> None:
        self.label = PartLabel.parse(self.label)
        self.triangle_ids = np.unique(np.asarray(self.triangle_ids, dtype=np.int64).ravel())
        if not 0.0 <= self.confidence <= 1.0:
            raise SchemaError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(eq=False)
class PartSegmentation:
    """Per-triangle partition of a mesh into openable parts and the base."""

    n_triangles: int
    parts: list[PartInstance] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        seen = np.zeros(self.n_triangles, dtype=bool)
        for part in self.parts:
            ids = part.triangle_ids
            if ids.size == 0:
                raise SchemaError(f"part {part.id!r} has no triangles")
            if ids.min() < 0 or ids.max() >= self.n_triangles:
                raise IndexOutOfRange(f"part {part.id!r} references a triangle outside [0, {self.n_triangles})")
            if seen[ids].any():
                raise OverlapError(f"part {part.id!r} claims triangles already owned by another part")
            seen[ids] = True

    @property
    def base_triangles(self) -> np.ndarray:
        return np.flatnonzero(self.instance_index() < 0)

    def instance_index(self) -> np.ndarray:
        """Per-triangle index into ``parts``; -1 marks the base."""
        out = np.full(self.n_triangles, -1, dtype=np.int64)
        for k, part in enumerate(self.parts):
            out[part.triangle_ids] = k
        return out

    def semantic_labels(self) -> np.ndarray:
        """Per-triangle label strings, ``"base"`` for unclaimed triangles."""
        out = np.full(self.n_triangles, PartLabel.BASE.value, dtype=object)
        for part in self.parts:
            out[part.triangle_ids] = part.label.value
        return out

    def part(self, part_id: str) -> PartInstance:
        for p in self.parts:
            if p.id == part_id:
                return p
        raise KeyError(part_id)

    def copy(self) -> PartSegmentation:
        return PartSegmentation(
            self.n_triangles,
            [PartInstance(p.id, p.label, p.triangle_ids.copy(), p.confidence, p.motion) for p in self.parts],
        )


@dataclass(eq=False)
class ArticulatedPart:
    id: str
    mesh: TriMesh
    label: PartLabel
    motion: MotionSpec


@dataclass(eq=False)
class ArticulatedObject:
    base: TriMesh
    parts: list[ArticulatedPart]
    frame: Frame = field(default_factory=Frame)

    def __post_init__(self) -> None:
        for p in self.parts:
            if p.mesh.n_triangles == 0:
                raise SchemaError(f"part {p.id!r} has an empty mesh")

    @classmethod
    def from_segmentation(cls, mesh: TriMesh, seg: PartSegmentation, frame: Frame) -> ArticulatedObject:
        """Split ``mesh`` into base and part meshes; parts without motion are left out."""
        parts = [
            ArticulatedPart(p.id, mesh.submesh(p.triangle_ids), p.label, p.motion)
            for p in seg.parts
            if p.motion is not None
        ]
        claimed = np.zeros(mesh.n_triangles, dtype=bool)
        for p in seg.parts:
            if p.motion is not None:
                claimed[p.triangle_ids] = True
        return cls(mesh.submesh(np.flatnonzero(~claimed)), parts, frame)
