"""External segmentation predictions: point-cloud instances and per-view image masks.

View masks use a row-major run-length encoding: ``pixels`` is a list of run
lengths alternating background/foreground, starting with a (possibly empty)
background run, and summing to ``width * height``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import SchemaError
from .annotations import read_json
from .types import PartLabel


def rle_encode(mask: np.ndarray) -> list[int]:
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs, width: int, height: int) -> np.ndarray:
    runs = np.asarray(runs, dtype=np.int64)
    if runs.size and runs.min() < 0:
        raise SchemaError("negative run length")
    if int(runs.sum()) != width * height:
        raise SchemaError(f"run lengths sum to {int(runs.sum())}, expected {width * height}")
    values = np.arange(runs.size) % 2 == 1
    return np.repeat(values, runs).reshape(height, width)


@dataclass
class PointInstance:
    label: PartLabel
    confidence: float
    point_ids: np.ndarray


@dataclass
class PointCloudPrediction:
    n_points: int
    instances: list[PointInstance] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> PointCloudPrediction:
        try:
            n = int(data["points"])
            instances = []
            for inst in data.get("instances", []):
                ids = np.asarray(inst["point_ids"], dtype=np.int64)
                if ids.size and (ids.min() < 0 or ids.max() >= n):
                    raise SchemaError("point id outside the indexed cloud")
                instances.append(PointInstance(PartLabel.parse(inst["label"]), float(inst["confidence"]), ids))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"bad point-cloud prediction: {exc}") from exc
        return cls(n, instances)

    def to_dict(self) -> dict:
        return {
            "points": self.n_points,
            "instances": [
                {"label": i.label.value, "confidence": i.confidence, "point_ids": [int(x) for x in i.point_ids]}
                for i in self.instances
            ],
        }


@dataclass
class ImageMask:
    label: PartLabel
    confidence: float
    bitmap: np.ndarray  # (H, W) bool


@dataclass
class ViewPrediction:
    view_id: str
    masks: list[ImageMask] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> ViewPrediction:
        try:
            masks = [
                ImageMask(
                    PartLabel.parse(m["label"]),
                    float(m["confidence"]),
                    rle_decode(m["pixels"], int(m["width"]), int(m["height"])),
                )
                for m in data.get("masks", [])
            ]
            return cls(str(data["view_id"]), masks)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"bad view prediction: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "view_id": self.view_id,
            "masks": [
                {
                    "label": m.label.value,
                    "confidence": m.confidence,
                    "pixels": rle_encode(m.bitmap),
                    "width": int(m.bitmap.shape[1]),
                    "height": int(m.bitmap.shape[0]),
                }
                for m in self.masks
            ],
        }


def load_pc_prediction(path) -> PointCloudPrediction:
    return PointCloudPrediction.from_dict(read_json(path))


def load_view_prediction(path) -> ViewPrediction:
    return ViewPrediction.from_dict(read_json(path))
