"""Command-line entry point: ``openparts <subcommand> ...``.

Exit codes: 0 success, 1 the command failed, 2 usage or configuration
error, 3 a batch run finished with per-object failures.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .assets_io.annotations import frame_from_dict, load_annotation, read_json, save_annotation, write_json
from .assets_io.meshes import load_mesh, save_mesh
from .assets_io.predictions import PointCloudPrediction, ViewPrediction
from .assets_io.types import ArticulatedObject, PartSegmentation
from .assets_io.urdf import export_urdf
from .config import PipelineConfig
from .errors import OpenPartsError, SchemaError
from .fusion import camera_from_dict, fuse_views, reconcile_pc_masks
from .geometry import Frame
from .interior import add_countertop, complete_interiors, strip_interior
from .metrics import EvalItem, EvalSettings, evaluate, report_markdown
from .motion import MotionTypeStats, predict_motion
from .pipeline import EXIT_OK, MESH_EXTENSIONS, SEG_SOURCES, exit_code, run_pipeline
from .sampling import farthest_point_sample, read_point_cloud, sample_surface, write_point_cloud

log = logging.getLogger("openparts")

EXIT_FAILURE = 1
EXIT_USAGE = 2
WORKERS_ENV = "OPENPARTS_WORKERS"


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _frame(path) -> Frame:
    return frame_from_dict(read_json(path)) if path else Frame()


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {k: getattr(args, k, None) for k in (
        "confidence_threshold", "merge_iou", "sample_points", "fps_points", "knn_k", "bins",
        "corner_margin", "iou_threshold", "axis_tol_deg", "origin_tol_frac", "oc_lambda", "oc_beta", "seed")}
    return cfg.replace(**overrides)


def _seg(args, mesh) -> tuple[PartSegmentation, Frame]:
    seg, frame = load_annotation(args.seg, mesh)
    if getattr(args, "frame", None):
        frame = _frame(args.frame)
    return seg, frame


def cmd_sample(args, cfg: PipelineConfig) -> int:
    mesh = load_mesh(args.mesh)
    cloud = sample_surface(mesh, cfg.sample_points, include_vertices=True, seed=cfg.seed)
    if cfg.fps_points < len(cloud):
        cloud = cloud.subset(farthest_point_sample(cloud.positions, cfg.fps_points))
    write_point_cloud(cloud, args.output)
    log.info("wrote %d points to %s", len(cloud), args.output)
    return EXIT_OK


def cmd_fuse_views(args, cfg: PipelineConfig) -> int:
    mesh = load_mesh(args.mesh)
    data = read_json(args.views)
    try:
        cams = [camera_from_dict(c) for c in data["cameras"]]
        preds = [ViewPrediction.from_dict(v) for v in data["predictions"]]
        res = tuple(int(x) for x in data["resolution"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"view file: {exc}") from exc
    seg = fuse_views(mesh, cams, preds, res, cfg.confidence_threshold, cfg.merge_iou, cfg.pixel_coverage)
    save_annotation(seg, _frame(args.frame), args.output)
    return EXIT_OK


def cmd_fuse_pc(args, cfg: PipelineConfig) -> int:
    mesh = load_mesh(args.mesh)
    cloud = read_point_cloud(args.points)
    pred = PointCloudPrediction.from_dict(read_json(args.pred))
    dense = sample_surface(mesh, cfg.sample_points, include_vertices=True, seed=cfg.seed)
    seg = reconcile_pc_masks(pred, cloud, mesh, cfg.merge_iou, dense, cfg.knn_k)
    save_annotation(seg, _frame(args.frame), args.output)
    return EXIT_OK


def cmd_predict_motion(args, cfg: PipelineConfig) -> int:
    mesh = load_mesh(args.mesh)
    seg, frame = _seg(args, mesh)
    stats = MotionTypeStats.load(args.stats) if args.stats else None
    diagnostics: list[str] = []
    seg = predict_motion(seg, mesh, frame, stats, cfg.bins, cfg.handle_fraction, diagnostics)
    save_annotation(seg, frame, args.output)
    for d in diagnostics:
        log.warning(d)
    return EXIT_OK


def _articulated(args, cfg: PipelineConfig) -> ArticulatedObject:
    mesh = load_mesh(args.mesh)
    seg, frame = _seg(args, mesh)
    if any(p.motion is None for p in seg.parts):
        seg = predict_motion(seg, mesh, frame, None, cfg.bins, cfg.handle_fraction)
    return ArticulatedObject.from_segmentation(mesh, seg, frame)


def cmd_complete_interior(args, cfg: PipelineConfig) -> int:
    obj = _articulated(args, cfg)
    diagnostics: list[str] = []
    obj = complete_interiors(obj, cfg.wall_thickness, diagnostics, cfg.corner_margin)
    for d in diagnostics:
        log.warning(d)
    manifest = export_urdf(obj, args.output, args.name or Path(args.mesh).stem)
    log.info("wrote %s", manifest["urdf"])
    return EXIT_OK


def cmd_export_urdf(args, cfg: PipelineConfig) -> int:
    obj = _articulated(args, cfg)
    manifest = export_urdf(obj, args.output, args.name or Path(args.mesh).stem)
    log.info("wrote %s", manifest["urdf"])
    return EXIT_OK


def cmd_strip_interior(args, cfg: PipelineConfig) -> int:
    mesh = load_mesh(args.mesh)
    out = strip_interior(mesh, args.views, (args.res, args.res))
    save_mesh(out, args.output)
    log.info("kept %d of %d triangles", out.n_triangles, mesh.n_triangles)
    return EXIT_OK


def cmd_add_countertop(args, cfg: PipelineConfig) -> int:
    mesh = load_mesh(args.mesh)
    out = add_countertop(mesh, _frame(args.frame))
    save_mesh(out, args.output)
    log.info("countertop %s", "added" if out.n_triangles > mesh.n_triangles else "not needed")
    return EXIT_OK


def _find_mesh(stem: str, dirs) -> Path | None:
    for d in dirs:
        for ext in MESH_EXTENSIONS:
            p = Path(d) / f"{stem}{ext}"
            if p.exists():
                return p
    return None


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    gt_dir, pred_dir = Path(args.gt_dir), Path(args.pred_dir)
    mesh_dirs = [args.mesh_dir] if args.mesh_dir else [gt_dir]
    items = []
    for gt_path in sorted(gt_dir.glob("*.json")):
        stem = gt_path.name[:-len(".json")]
        if "." in stem:  # frame or prediction side files
            continue
        mesh_path = _find_mesh(stem, mesh_dirs)
        try:
            if mesh_path is None:
                raise FileNotFoundError(f"no mesh for {stem}")
            mesh = load_mesh(mesh_path)
            gt, frame = load_annotation(gt_path, mesh)
            pred, _ = load_annotation(pred_dir / f"{stem}.json", mesh)
            items.append(EvalItem(stem, mesh, gt, pred, frame))
        except (OpenPartsError, OSError) as exc:
            items.append(EvalItem(stem, None, None, None, error=f"{type(exc).__name__}: {exc}"))
    settings = EvalSettings(cfg.iou_threshold, cfg.axis_tol_deg, cfg.origin_tol_frac, cfg.oc_lambda, cfg.oc_beta)
    report = evaluate(items, settings)
    write_json(report, args.out)
    if args.table:
        Path(args.table).write_text(report_markdown(report))
    if report["n_objects"] == 0:
        log.error("no objects evaluated")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_pipeline(args, cfg: PipelineConfig) -> int:
    stats = MotionTypeStats.load(args.stats) if args.stats else None
    manifest = run_pipeline(args.mesh_dir, args.seg_source, args.out, cfg, args.seg_dir, args.workers, stats)
    log.info("%d/%d objects succeeded", manifest["succeeded"], manifest["total"])
    return exit_code(manifest)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int)
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = argparse.ArgumentParser(prog="openparts", description="Openable part tooling for 3D assets.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common], help="sample a point cloud and downsample with FPS")
    s.add_argument("--mesh", required=True)
    s.add_argument("--points", dest="sample_points", type=int)
    s.add_argument("--fps", dest="fps_points", type=int)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("fuse-views", parents=[common], help="fuse per-view image masks onto the mesh")
    s.add_argument("--mesh", required=True)
    s.add_argument("--views", required=True, help="JSON with resolution, cameras and predictions")
    s.add_argument("--frame")
    s.add_argument("--confidence-threshold", type=float)
    s.add_argument("--merge-iou", type=float)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_fuse_views)

    s = sub.add_parser("fuse-pc", parents=[common], help="map point-cloud instances onto triangles")
    s.add_argument("--mesh", required=True)
    s.add_argument("--points", required=True, help="PLY cloud the prediction indexes")
    s.add_argument("--pred", required=True)
    s.add_argument("--frame")
    s.add_argument("--merge-iou", type=float)
    s.add_argument("--dense-points", dest="sample_points", type=int)
    s.add_argument("--knn-k", type=int)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_fuse_pc)

    s = sub.add_parser("predict-motion", parents=[common], help="heuristic motion for segmented parts")
    s.add_argument("--mesh", required=True)
    s.add_argument("--seg", required=True)
    s.add_argument("--stats", help="motion type counts per label")
    s.add_argument("--frame")
    s.add_argument("--bins", type=int)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_predict_motion)

    for name, func, text in (("complete-interior", cmd_complete_interior, "add drawer interiors and export URDF"),
                             ("export-urdf", cmd_export_urdf, "export an articulated URDF")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--mesh", required=True)
        s.add_argument("--seg", required=True)
        s.add_argument("--frame")
        s.add_argument("--name")
        if name == "complete-interior":
            s.add_argument("--corner-margin", type=float)
        s.add_argument("-o", "--output", required=True, help="output directory")
        s.set_defaults(func=func)

    s = sub.add_parser("strip-interior", parents=[common], help="remove geometry hidden from outside")
    s.add_argument("--mesh", required=True)
    s.add_argument("--views", type=int, default=64)
    s.add_argument("--res", type=int, default=512)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_strip_interior)

    s = sub.add_parser("add-countertop", parents=[common], help="close an open top with a slab")
    s.add_argument("--mesh", required=True)
    s.add_argument("--frame")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_add_countertop)

    s = sub.add_parser("evaluate", parents=[common], help="score predictions against ground truth")
    s.add_argument("--gt-dir", required=True)
    s.add_argument("--pred-dir", required=True)
    s.add_argument("--mesh-dir")
    s.add_argument("--out", required=True)
    s.add_argument("--table")
    s.add_argument("--iou-threshold", type=float)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("pipeline", parents=[common], help="segment, articulate and export a directory")
    s.add_argument("--mesh-dir", required=True)
    s.add_argument("--seg-source", required=True, choices=SEG_SOURCES)
    s.add_argument("--seg-dir")
    s.add_argument("--out", required=True)
    s.add_argument("--stats")
    s.add_argument("--workers", type=int, default=_default_workers(),
                   help=f"worker processes (default from ${WORKERS_ENV}, else 1)")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        cfg = _config(args)
    except (OpenPartsError, OSError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_USAGE
    try:
        return args.func(args, cfg)
    except (OpenPartsError, OSError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
