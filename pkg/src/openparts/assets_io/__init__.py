from .annotations import (
    load_annotation,
    read_json,
    save_annotation,
    segmentation_from_dict,
    segmentation_to_dict,
    write_json,
)
from .meshes import load_mesh, save_mesh
from .predictions import (
    ImageMask,
    PointCloudPrediction,
    PointInstance,
    ViewPrediction,
    load_pc_prediction,
    load_view_prediction,
    rle_decode,
    rle_encode,
)
from .types import (
    OPENABLE,
    ArticulatedObject,
    ArticulatedPart,
    MotionSpec,
    MotionType,
    PartInstance,
    PartLabel,
    PartSegmentation,
)
from .urdf import export_urdf, parse_urdf

__all__ = [
    "OPENABLE", "ArticulatedObject", "ArticulatedPart", "ImageMask", "MotionSpec", "MotionType",
    "PartInstance", "PartLabel", "PartSegmentation", "PointCloudPrediction", "PointInstance",
    "ViewPrediction", "export_urdf", "load_annotation", "load_mesh", "load_pc_prediction",
    "load_view_prediction", "parse_urdf", "read_json", "rle_decode", "rle_encode",
    "save_annotation", "save_mesh", "segmentation_from_dict", "segmentation_to_dict", "write_json",
]
