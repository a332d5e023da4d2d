"""Batch processing: segmentation, motion, interior completion and URDF export per object.

Input layout, for a mesh ``<stem>.<ext>`` in ``mesh_dir`` (ext one of obj,
ply, glb, gltf) and a segmentation directory ``seg_dir``:

* ``gt``: ``<stem>.json`` annotation (parts, optional frame).
* ``pc-pred``: ``<stem>.pc.json`` point-cloud prediction plus the cloud it
  indexes, ``<stem>.pc.ply``.
* ``view-pred``: ``<stem>.views.json`` holding ``resolution`` [W, H],
  ``cameras`` (camera dicts) and ``predictions`` (view prediction dicts).

For the prediction sources an optional ``<stem>.frame.json`` gives the
object frame. Each object gets ``out_dir/<stem>/`` with the predicted
``segmentation.json``, the URDF export and ``log.json``. The run writes
``out_dir/manifest.json``.
"""
from __future__ import annotations

import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .assets_io.annotations import frame_from_dict, load_annotation, read_json, save_annotation, write_json
from .assets_io.meshes import load_mesh
from .assets_io.predictions import PointCloudPrediction, ViewPrediction
from .assets_io.types import ArticulatedObject, PartSegmentation
from .assets_io.urdf import export_urdf
from .config import PipelineConfig
from .errors import OpenPartsError
from .fusion import camera_from_dict, fuse_views, reconcile_pc_masks
from .geometry import Frame, TriMesh
from .interior import complete_interiors
from .motion import MotionTypeStats, predict_motion
from .sampling import read_point_cloud, sample_surface

log = logging.getLogger(__name__)

MESH_EXTENSIONS = (".obj", ".ply", ".glb", ".gltf")
SEG_SOURCES = ("gt", "pc-pred", "view-pred")
MANIFEST_VERSION = 1
EXIT_OK = 0
EXIT_OBJECT_FAILURES = 3


def find_meshes(mesh_dir) -> list[Path]:
    d = Path(mesh_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"mesh directory {d} does not exist")
    # point-cloud files share the .ply extension; they carry a second suffix
    return sorted(p for p in d.iterdir()
                  if p.suffix.lower() in MESH_EXTENSIONS and ".pc" not in p.suffixes[:-1])


def _frame_for(seg_dir: Path, stem: str) -> Frame:
    path = seg_dir / f"{stem}.frame.json"
    return frame_from_dict(read_json(path)) if path.exists() else Frame()


def segment(mesh: TriMesh, stem: str, seg_source: str, seg_dir: Path,
            config: PipelineConfig) -> tuple[PartSegmentation, Frame]:
    if seg_source == "gt":
        return load_annotation(seg_dir / f"{stem}.json", mesh)
    frame = _frame_for(seg_dir, stem)
    if seg_source == "pc-pred":
        pred = PointCloudPrediction.from_dict(read_json(seg_dir / f"{stem}.pc.json"))
        cloud = read_point_cloud(seg_dir / f"{stem}.pc.ply")
        dense = sample_surface(mesh, config.sample_points, include_vertices=True, seed=config.seed)
        return reconcile_pc_masks(pred, cloud, mesh, config.merge_iou, dense, config.knn_k), frame
    if seg_source == "view-pred":
        data = read_json(seg_dir / f"{stem}.views.json")
        cams = [camera_from_dict(c) for c in data["cameras"]]
        preds = [ViewPrediction.from_dict(v) for v in data["predictions"]]
        res = tuple(int(x) for x in data["resolution"])
        return fuse_views(mesh, cams, preds, res, config.confidence_threshold, config.merge_iou,
                          config.pixel_coverage), frame
    raise ValueError(f"unknown segmentation source {seg_source!r}")


@dataclass
class _Job:
    mesh_path: str
    seg_source: str
    seg_dir: str
    out_dir: str
    config: dict
    stats: dict | None


def process_object(job: _Job) -> dict:
    """Run every stage for one object; errors are captured in the returned record."""
    mesh_path = Path(job.mesh_path)
    stem = mesh_path.stem
    out = Path(job.out_dir) / stem
    config = PipelineConfig.from_dict(job.config)
    stats = MotionTypeStats(job.stats) if job.stats else None
    stages: list[dict] = []
    record = {"name": stem, "status": "ok", "error": None, "parts": 0, "diagnostics": []}

    def stage(name: str, status: str = "ok", **info) -> None:
        stages.append({"stage": name, "status": status, **info})
        log.info("object=%s stage=%s status=%s", stem, name, status)

    try:
        mesh = load_mesh(mesh_path)
        stage("load", triangles=mesh.n_triangles)
        seg, frame = segment(mesh, stem, job.seg_source, Path(job.seg_dir), config)
        stage("segment", parts=len(seg.parts))
        diagnostics: list[str] = []
        seg = predict_motion(seg, mesh, frame, stats, config.bins, config.handle_fraction, diagnostics)
        stage("motion", failed=len(diagnostics))
        out.mkdir(parents=True, exist_ok=True)
        save_annotation(seg, frame, out / "segmentation.json")
        obj = ArticulatedObject.from_segmentation(mesh, seg, frame)
        obj = complete_interiors(obj, config.wall_thickness, diagnostics, config.corner_margin)
        stage("interior")
        manifest = export_urdf(obj, out, stem)
        stage("export", urdf=Path(manifest["urdf"]).name)
        record.update(parts=len(obj.parts), urdf=str(Path(manifest["urdf"]).relative_to(job.out_dir)),
                      diagnostics=diagnostics)
    except (OpenPartsError, OSError, KeyError, ValueError, TypeError) as exc:
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        stage("error", "failed", error=record["error"])
        log.debug("object=%s traceback=%s", stem, traceback.format_exc())
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_json(stages, out / "log.json")
    except OSError:
        log.warning("object=%s could not write its log", stem)
    return record


def run_pipeline(mesh_dir, seg_source: str, out_dir, config: PipelineConfig | None = None,
                 seg_dir=None, workers: int = 1, stats: MotionTypeStats | None = None) -> dict:
    """Process every mesh in ``mesh_dir``; returns the manifest (also written to disk).

    Objects are independent; with ``workers > 1`` they run in a process pool.
    The manifest lists objects in name order so reruns are byte-identical.
    """
    if seg_source not in SEG_SOURCES:
        raise ValueError(f"seg_source must be one of {SEG_SOURCES}")
    config = config or PipelineConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seg_dir = Path(seg_dir) if seg_dir is not None else Path(mesh_dir)
    jobs = [_Job(str(p), seg_source, str(seg_dir), str(out), config.to_dict(),
                 stats.to_dict() if stats else None) for p in find_meshes(mesh_dir)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(process_object, jobs))
    else:
        records = [process_object(j) for j in jobs]
    records.sort(key=lambda r: r["name"])
    failed = sum(r["status"] != "ok" for r in records)
    manifest = {
        "version": MANIFEST_VERSION,
        "seg_source": seg_source,
        "config": config.to_dict(),
        "objects": records,
        "succeeded": len(records) - failed,
        "failed": failed,
        "total": len(records),
    }
    write_json(manifest, out / "manifest.json")
    return manifest


def exit_code(manifest: dict) -> int:
    return EXIT_OK if manifest["failed"] == 0 else EXIT_OBJECT_FAILURES
