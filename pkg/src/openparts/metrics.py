"""Evaluation of part segmentation and motion predictions.

All thresholds are inclusive: a match needs IoU >= threshold, an axis is
correct when its angle is <= ``axis_tol_deg`` and an origin when its
distance to the ground-truth axis line is <= ``origin_tol_frac`` times the
ground-truth part diagonal.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .assets_io.types import MotionType, PartInstance, PartLabel, PartSegmentation
from .errors import EmptyInput, ShapeMismatch, ZeroVolume
from .geometry import AABB, Frame, TriMesh, aabb_in_frame, giou3d, point_line_distance

REPORT_VERSION = 1
IOU_THRESHOLD = 0.5
AXIS_TOL_DEG = 5.0
ORIGIN_TOL_FRAC = 0.1
OC_LAMBDA = 0.5
OC_BETA = 0.6


@dataclass
class Matching:
    pairs: list[tuple[str, str, float]]
    unmatched_preds: list[str]
    unmatched_gts: list[str]
    pred_labels: dict[str, str] = field(default_factory=dict)
    gt_labels: dict[str, str] = field(default_factory=dict)

    @property
    def n_pred(self) -> int:
        return len(self.pairs) + len(self.unmatched_preds)

    @property
    def n_gt(self) -> int:
        return len(self.pairs) + len(self.unmatched_gts)


def _check(pred: PartSegmentation, gt: PartSegmentation, areas) -> np.ndarray:
    if pred.n_triangles != gt.n_triangles:
        raise ShapeMismatch(f"prediction has {pred.n_triangles} triangles, ground truth {gt.n_triangles}")
    areas = np.asarray(areas, dtype=np.float64).ravel()
    if len(areas) != gt.n_triangles:
        raise ShapeMismatch("area vector does not match the triangle count")
    return areas


def iou_matrix(preds: Sequence[PartInstance], gts: Sequence[PartInstance], areas: np.ndarray) -> np.ndarray:
    """Area-weighted IoU between every predicted and every ground-truth part."""
    n = len(areas)
    out = np.zeros((len(preds), len(gts)))
    if not preds or not gts:
        return out
    P = np.zeros((len(preds), n))
    G = np.zeros((len(gts), n))
    for i, p in enumerate(preds):
        P[i, p.triangle_ids] = 1.0
    for j, g in enumerate(gts):
        G[j, g.triangle_ids] = 1.0
    inter = (P * areas) @ G.T
    size_p = P @ areas
    size_g = G @ areas
    union = size_p[:, None] + size_g[None, :] - inter
    np.divide(inter, union, out=out, where=union > 0)
    return out


def match_parts(pred: PartSegmentation, gt: PartSegmentation, areas,
                iou_threshold: float = IOU_THRESHOLD) -> Matching:
    """Greedy label-aware matching in descending prediction confidence.

    Confidence ties keep the prediction order; IoU ties go to the lower
    ground-truth index.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must lie in (0, 1]")
    areas = _check(pred, gt, areas)
    ious = iou_matrix(pred.parts, gt.parts, areas)
    order = sorted(range(len(pred.parts)), key=lambda i: (-pred.parts[i].confidence, i))
    taken = np.zeros(len(gt.parts), dtype=bool)
    pairs, unmatched = [], []
    for i in order:
        p = pred.parts[i]
        best, best_j = -1.0, -1
        for j, g in enumerate(gt.parts):
            if taken[j] or g.label is not p.label:
                continue
            if ious[i, j] >= iou_threshold and ious[i, j] > best:
                best, best_j = ious[i, j], j
        if best_j < 0:
            unmatched.append(p.id)
        else:
            taken[best_j] = True
            pairs.append((p.id, gt.parts[best_j].id, float(best)))
    return Matching(
        pairs, unmatched, [g.id for j, g in enumerate(gt.parts) if not taken[j]],
        {p.id: p.label.value for p in pred.parts}, {g.id: g.label.value for g in gt.parts},
    )


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float


@dataclass
class SegReport:
    micro: PRF
    macro: PRF
    mean_object_f1: float
    per_label: dict[str, PRF]
    per_object: list[dict]


def _mean_defined(values: Iterable[float | None]) -> float:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else 0.0


def seg_prf(matchings: Sequence[Matching]) -> SegReport:
    """Micro P/R/F1 over all parts and macro P/R/F1 over objects.

    Objects without predictions have undefined precision and are left out of
    the macro precision mean, and likewise for recall. Macro F1 combines the
    macro precision and recall; the mean of per-object F1 is kept alongside.
    """
    if not matchings:
        raise EmptyInput("no objects to evaluate")
    tp = sum(len(m.pairs) for m in matchings)
    n_pred = sum(m.n_pred for m in matchings)
    n_gt = sum(m.n_gt for m in matchings)
    micro_p = tp / n_pred if n_pred else 0.0
    micro_r = tp / n_gt if n_gt else 0.0
    rows = []
    for m in matchings:
        k = len(m.pairs)
        p = k / m.n_pred if m.n_pred else None
        r = k / m.n_gt if m.n_gt else None
        rows.append({"matched": k, "n_pred": m.n_pred, "n_gt": m.n_gt, "precision": p, "recall": r,
                     "f1": 2 * k / (m.n_pred + m.n_gt) if m.n_pred + m.n_gt else 0.0})
    macro_p = _mean_defined(r["precision"] for r in rows)
    macro_r = _mean_defined(r["recall"] for r in rows)
    per_label = {}
    for label in (l.value for l in PartLabel if l.openable):
        k = sum(1 for m in matchings for pid, _, _ in m.pairs if m.pred_labels.get(pid) == label)
        np_ = sum(1 for m in matchings for v in m.pred_labels.values() if v == label)
        ng = sum(1 for m in matchings for v in m.gt_labels.values() if v == label)
        if np_ or ng:
            lp = k / np_ if np_ else 0.0
            lr = k / ng if ng else 0.0
            per_label[label] = PRF(lp, lr, f1(lp, lr))
    return SegReport(PRF(micro_p, micro_r, f1(micro_p, micro_r)), PRF(macro_p, macro_r, f1(macro_p, macro_r)),
                     float(np.mean([r["f1"] for r in rows])), per_label, rows)


def axis_angle_deg(a, b) -> float:
    """Sign-invariant angle between two axes in degrees."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = abs(float(a @ b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.degrees(math.acos(min(c, 1.0)))


@dataclass
class MotionCounts:
    m: int = 0
    ma: int = 0
    mao: int = 0


@dataclass
class MotionReport:
    matched: int
    n_pred: int
    n_gt: int
    counts: MotionCounts
    precision: dict[str, float]
    recall: dict[str, float]
    axis_error_deg: float | None
    origin_error: float | None
    origin_error_frac: float | None
    n_axis: int = 0
    n_origin: int = 0


@dataclass
class PairMotion:
    m: bool
    ma: bool
    mao: bool
    angle: float | None
    origin_dist: float | None
    origin_frac: float | None


def part_diagonal(mesh: TriMesh, triangle_ids, frame: Frame | None = None) -> float:
    verts = mesh.vertices[np.unique(mesh.triangles[triangle_ids])]
    return aabb_in_frame(verts, frame).diagonal


def score_pair(pred: PartInstance, gt: PartInstance, diagonal: float, axis_tol_deg: float = AXIS_TOL_DEG,
               origin_tol_frac: float = ORIGIN_TOL_FRAC) -> PairMotion:
    pm, gm = pred.motion, gt.motion
    if pm is None or gm is None:
        return PairMotion(False, False, False, None, None, None)
    angle = axis_angle_deg(pm.axis_vec, gm.axis_vec)
    dist = frac = None
    if gm.motion_type is MotionType.REVOLUTE and pm.motion_type is MotionType.REVOLUTE:
        dist = point_line_distance(pm.origin, gm.origin, gm.axis_vec)
        frac = dist / diagonal if diagonal > 0 else (0.0 if dist == 0 else math.inf)
    m = pm.motion_type is gm.motion_type
    ma = m and angle <= axis_tol_deg
    if gm.motion_type is MotionType.PRISMATIC:
        mao = ma
    else:
        mao = ma and dist is not None and dist <= origin_tol_frac * diagonal
    return PairMotion(m, ma, mao, angle, dist, frac)


def object_motion(matching: Matching, pred: PartSegmentation, gt: PartSegmentation, mesh: TriMesh,
                  frame: Frame | None = None, axis_tol_deg: float = AXIS_TOL_DEG,
                  origin_tol_frac: float = ORIGIN_TOL_FRAC) -> list[PairMotion]:
    out = []
    for pid, gid, _ in matching.pairs:
        g = gt.part(gid)
        out.append(score_pair(pred.part(pid), g, part_diagonal(mesh, g.triangle_ids, frame),
                              axis_tol_deg, origin_tol_frac))
    return out


def motion_metrics(matchings: Sequence[Matching], pair_scores: Sequence[Sequence[PairMotion]]) -> MotionReport:
    """Aggregate +M/+MA/+MAO precision and recall with mean axis and origin errors."""
    counts = MotionCounts()
    angles, dists, fracs = [], [], []
    for scores in pair_scores:
        for s in scores:
            counts.m += s.m
            counts.ma += s.ma
            counts.mao += s.mao
            if s.angle is not None:
                angles.append(s.angle)
            if s.origin_dist is not None:
                dists.append(s.origin_dist)
                fracs.append(s.origin_frac)
    n_pred = sum(m.n_pred for m in matchings)
    n_gt = sum(m.n_gt for m in matchings)
    keys = {"M": counts.m, "MA": counts.ma, "MAO": counts.mao}
    return MotionReport(
        sum(len(m.pairs) for m in matchings), n_pred, n_gt, counts,
        {k: v / n_pred if n_pred else 0.0 for k, v in keys.items()},
        {k: v / n_gt if n_gt else 0.0 for k, v in keys.items()},
        float(np.mean(angles)) if angles else None,
        float(np.mean(dists)) if dists else None,
        float(np.mean(fracs)) if fracs else None,
        len(angles), len(dists),
    )


def ca_nca(pred: PartSegmentation, gt: PartSegmentation, areas) -> tuple[float, float, float]:
    """Area-weighted label accuracy, mean per-label accuracy, and accuracy over openable regions.

    CA_nb is 1 when neither side marks any triangle openable.
    """
    areas = _check(pred, gt, areas)
    lp, lg = pred.semantic_labels(), gt.semantic_labels()
    hit = (lp == lg).astype(np.float64) * areas
    total = areas.sum()
    ca = hit.sum() / total if total > 0 else 1.0
    per_label = []
    for label in np.unique(lg):
        sel = lg == label
        a = areas[sel].sum()
        if a > 0:
            per_label.append(hit[sel].sum() / a)
    nca = float(np.mean(per_label)) if per_label else 1.0
    base = PartLabel.BASE.value
    nb = (lp != base) | (lg != base)
    a_nb = areas[nb].sum()
    ca_nb = hit[nb].sum() / a_nb if a_nb > 0 else 1.0
    return float(ca), nca, float(ca_nb)


def _comb2(x: np.ndarray) -> float:
    return float((x * (x - 1.0) / 2.0).sum())


def weighted_ari(labels_a: np.ndarray, labels_b: np.ndarray, weights=None) -> float:
    """ARI with contingency entries weighted and rescaled to sum to the item count."""
    labels_a = np.asarray(labels_a).ravel()
    labels_b = np.asarray(labels_b).ravel()
    n = len(labels_a)
    if n != len(labels_b):
        raise ShapeMismatch("label vectors differ in length")
    if n < 2:
        return 1.0
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if not w.sum() > 0:
        w = np.ones(n)
    w = w * (n / w.sum())
    _, ia = np.unique(labels_a, return_inverse=True)
    _, ib = np.unique(labels_b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia.ravel(), ib.ravel()), w)
    index = _comb2(table)
    sum_a = _comb2(table.sum(axis=1))
    sum_b = _comb2(table.sum(axis=0))
    expected = sum_a * sum_b / (n * (n - 1.0) / 2.0)
    maximum = (sum_a + sum_b) / 2.0
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def ari(pred: PartSegmentation, gt: PartSegmentation, areas) -> float:
    areas = _check(pred, gt, areas)
    return weighted_ari(pred.instance_index(), gt.instance_index(), areas)


def _safe_giou(a: AABB, b: AABB) -> float:
    try:
        return giou3d(a, b)
    except ZeroVolume:
        if a == b:
            return 1.0
        scale = max(a.diagonal, b.diagonal, 1e-12) * 1e-9
        pad = lambda box: AABB(tuple(np.subtract(box.lo, scale)), tuple(np.add(box.hi, scale)))  # noqa: E731
        return giou3d(pad(a), pad(b))


def oc_cost_matrix(preds, gts, lam: float = OC_LAMBDA) -> np.ndarray:
    cost = np.zeros((len(preds), len(gts)))
    for i, (pl, conf, pb) in enumerate(preds):
        for j, (gl, gb) in enumerate(gts):
            loc = (1.0 - _safe_giou(pb, gb)) / 2.0
            cls = (1.0 - conf) / 2.0 if PartLabel.parse(pl) is PartLabel.parse(gl) else (1.0 + conf) / 2.0
            cost[i, j] = lam * loc + (1.0 - lam) * cls
    return cost


def oc_cost(preds: Sequence[tuple], gts: Sequence[tuple], lam: float = OC_LAMBDA, beta: float = OC_BETA) -> float:
    """Optimal correction cost between predicted ``(label, confidence, AABB)`` and GT ``(label, AABB)`` items.

    Every real item carries unit mass and each side gets a dummy whose mass
    equals the other side's item count, so both sides hold n_p + n_g units.
    Transport to or from a dummy costs ``beta``. With integral masses the
    optimal plan is a permutation, found exactly with an assignment solver
    on the expanded square matrix. The total is divided by n_p + n_g.
    """
    n_p, n_g = len(preds), len(gts)
    if n_p + n_g == 0:
        return 0.0
    n = n_p + n_g
    big = np.zeros((n, n))
    big[:n_p, :n_g] = oc_cost_matrix(preds, gts, lam)
    big[:n_p, n_g:] = beta
    big[n_p:, :n_g] = beta
    rows, cols = linear_sum_assignment(big)
    return float(big[rows, cols].sum() / n)


def part_boxes(mesh: TriMesh, seg: PartSegmentation, frame: Frame | None = None) -> list[AABB]:
    return [aabb_in_frame(mesh.vertices[np.unique(mesh.triangles[p.triangle_ids])], frame) for p in seg.parts]


def object_oc_cost(mesh: TriMesh, pred: PartSegmentation, gt: PartSegmentation, frame: Frame | None = None,
                   lam: float = OC_LAMBDA, beta: float = OC_BETA) -> float:
    pb = part_boxes(mesh, pred, frame)
    gb = part_boxes(mesh, gt, frame)
    return oc_cost([(p.label, p.confidence, b) for p, b in zip(pred.parts, pb)],
                   [(g.label, b) for g, b in zip(gt.parts, gb)], lam, beta)


@dataclass
class EvalItem:
    name: str
    mesh: TriMesh | None
    gt: PartSegmentation | None
    pred: PartSegmentation | None
    frame: Frame | None = None
    error: str | None = None


@dataclass
class EvalSettings:
    iou_threshold: float = IOU_THRESHOLD
    axis_tol_deg: float = AXIS_TOL_DEG
    origin_tol_frac: float = ORIGIN_TOL_FRAC
    oc_lambda: float = OC_LAMBDA
    oc_beta: float = OC_BETA


def evaluate(items: Sequence[EvalItem], settings: EvalSettings | None = None) -> dict:
    """Per-object metrics plus dataset aggregates as a JSON-ready dict.

    Objects are processed in name order so results do not depend on input
    order. Objects that fail to load or score are listed under ``skipped``.
    """
    s = settings or EvalSettings()
    matchings, scores, rows, skipped = [], [], [], []
    for item in sorted(items, key=lambda it: it.name):
        if item.error is not None or item.mesh is None or item.gt is None or item.pred is None:
            skipped.append({"name": item.name, "error": item.error or "missing input"})
            continue
        try:
            areas = item.mesh.triangle_areas()
            m = match_parts(item.pred, item.gt, areas, s.iou_threshold)
            pairs = object_motion(m, item.pred, item.gt, item.mesh, item.frame, s.axis_tol_deg, s.origin_tol_frac)
            ca, nca, ca_nb = ca_nca(item.pred, item.gt, areas)
            row = {
                "name": item.name, "n_pred": m.n_pred, "n_gt": m.n_gt, "matched": len(m.pairs),
                "ca": ca, "nca": nca, "ca_nb": ca_nb, "ari": ari(item.pred, item.gt, areas),
                "oc_cost": object_oc_cost(item.mesh, item.pred, item.gt, item.frame, s.oc_lambda, s.oc_beta),
                "pairs": [{"pred": p, "gt": g, "iou": iou, "m": sc.m, "ma": sc.ma, "mao": sc.mao,
                           "axis_error_deg": sc.angle, "origin_error": sc.origin_dist}
                          for (p, g, iou), sc in zip(m.pairs, pairs)],
            }
        except Exception as exc:
            skipped.append({"name": item.name, "error": f"{type(exc).__name__}: {exc}"})
            continue
        matchings.append(m)
        scores.append(pairs)
        rows.append(row)
    report = {"version": REPORT_VERSION, "settings": asdict(s), "n_objects": len(rows), "skipped": skipped}
    if not rows:
        return report
    seg = seg_prf(matchings)
    motion = motion_metrics(matchings, scores)
    report["segmentation"] = asdict(seg)
    report["motion"] = asdict(motion)
    for key in ("ca", "nca", "ca_nb", "ari", "oc_cost"):
        report[key] = float(np.mean([r[key] for r in rows]))
    report["objects"] = rows
    return report


def _pct(x) -> str:
    return "n/a" if x is None else f"{100 * x:.1f}"


def _num(x) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def report_markdown(report: dict) -> str:
    lines = [f"# Evaluation ({report['n_objects']} objects, {len(report['skipped'])} skipped)", ""]
    if "segmentation" not in report:
        return "\n".join(lines + ["No objects were evaluated.", ""])
    seg, mot = report["segmentation"], report["motion"]
    lines += ["| metric | P | R | F1 |", "|---|---|---|---|"]
    for key in ("micro", "macro"):
        r = seg[key]
        lines.append(f"| seg {key} | {_pct(r['precision'])} | {_pct(r['recall'])} | {_pct(r['f1'])} |")
    for label, r in sorted(seg["per_label"].items()):
        lines.append(f"| seg {label} | {_pct(r['precision'])} | {_pct(r['recall'])} | {_pct(r['f1'])} |")
    lines += ["", "| motion | P | R |", "|---|---|---|"]
    for key in ("M", "MA", "MAO"):
        lines.append(f"| +{key} | {_pct(mot['precision'][key])} | {_pct(mot['recall'][key])} |")
    lines += [
        "",
        f"- axis error (deg): {_num(mot['axis_error_deg'])}",
        f"- origin error: {_num(mot['origin_error'])} ({_num(mot['origin_error_frac'])} of part diagonal)",
        f"- CA: {_pct(report['ca'])}, NCA: {_pct(report['nca'])}, CA_nb: {_pct(report['ca_nb'])}",
        f"- ARI: {_num(report['ari'])}",
        f"- OC-cost: {_num(report['oc_cost'])}",
    ]
    for sk in report["skipped"]:
        lines.append(f"- skipped {sk['name']}: {sk['error']}")
    return "\n".join(lines) + "\n"
