"""Pipeline configuration with JSON round-trip.

Config file schema: a JSON object whose keys are the field names of
:class:`PipelineConfig`; omitted keys keep their defaults, unknown keys are
rejected.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .assets_io.annotations import read_json, write_json
from .errors import SchemaError


@dataclass(frozen=True)
class PipelineConfig:
    confidence_threshold: float = 0.9
    merge_iou: float = 0.8
    pixel_coverage: float = 0.5
    sample_points: int = 1_000_000
    fps_points: int = 20_000
    knn_k: int = 3
    fusion_views: int = 3
    fusion_resolution: int = 256
    strip_views: int = 64
    strip_resolution: int = 512
    bins: int = 32
    handle_fraction: float = 0.02
    corner_margin: float = 1.25
    wall_thickness: float | None = None
    iou_threshold: float = 0.5
    axis_tol_deg: float = 5.0
    origin_tol_frac: float = 0.1
    oc_lambda: float = 0.5
    oc_beta: float = 0.6
    seed: int = 0

    def __post_init__(self) -> None:
        unit = ("confidence_threshold", "merge_iou", "pixel_coverage", "handle_fraction", "oc_lambda")
        for name in unit:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SchemaError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise SchemaError("iou_threshold must lie in (0, 1]")
        positive = ("sample_points", "fps_points", "knn_k", "fusion_views", "fusion_resolution",
                    "strip_resolution", "origin_tol_frac", "axis_tol_deg")
        for name in positive:
            if not getattr(self, name) > 0:
                raise SchemaError(f"{name} must be positive")
        if self.fps_points > self.sample_points:
            raise SchemaError("fps_points cannot exceed sample_points")
        if self.strip_views < 4:
            raise SchemaError("strip_views must be at least 4")
        if self.bins < 4:
            raise SchemaError("bins must be at least 4")
        if self.corner_margin < 1.0:
            raise SchemaError("corner_margin must be at least 1")
        if self.oc_beta < 0:
            raise SchemaError("oc_beta must be nonnegative")
        if self.wall_thickness is not None and not self.wall_thickness > 0:
            raise SchemaError("wall_thickness must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> PipelineConfig:
        if not isinstance(data, dict):
            raise SchemaError("config must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise SchemaError(f"unknown config keys: {', '.join(unknown)}")
        clean = {}
        for key, value in data.items():
            default = known[key].default
            if value is None or default is None:
                clean[key] = value
            elif isinstance(default, bool):
                clean[key] = bool(value)
            elif isinstance(default, int):
                if float(value) != int(value):
                    raise SchemaError(f"{key} must be an integer")
                clean[key] = int(value)
            else:
                clean[key] = float(value)
        return cls(**clean)

    @classmethod
    def load(cls, path) -> PipelineConfig:
        return cls.from_dict(read_json(path))

    def save(self, path) -> Path:
        return write_json(self.to_dict(), path)

    def replace(self, **overrides) -> PipelineConfig:
        merged = self.to_dict()
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineConfig.from_dict(merged)
