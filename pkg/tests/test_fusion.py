import math

import numpy as np
import pytest

from openparts.assets_io import ImageMask, MotionSpec, PartLabel, PointCloudPrediction, PointInstance, ViewPrediction
from openparts.errors import InvalidCamera, ShapeMismatch
from openparts.fusion import (
    BACKGROUND,
    OrthoCamera,
    PinholeCamera,
    ViewMask,
    camera_from_dict,
    default_cameras,
    fuse_views,
    infer_labels_from_motion,
    lift_view_masks,
    reconcile_pc_masks,
    reconcile_view_masks,
    render_index_maps,
)
from openparts.geometry import Frame, TriMesh, box_mesh
from openparts.sampling import BASE, sample_surface

from oracles import nearest_hit


def quad_mesh():
    return TriMesh([[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]], [[0, 1, 2], [0, 2, 3]])


def strip_mesh(n=20):
    """A row of ``n`` unit squares (2 triangles each) along x."""
    verts, tris = [], []
    for i in range(n):
        b = len(verts)
        verts += [[i, 0, 0], [i + 1, 0, 0], [i + 1, 1, 0], [i, 1, 0]]
        tris += [[b, b + 1, b + 2], [b, b + 2, b + 3]]
    return TriMesh(verts, tris)


def vmask(tris, conf, label="door", view="v", k=0):
    return ViewMask(view, PartLabel.parse(label), conf, {int(t): 10 for t in tris}, k)


class TestRender:
    def test_full_frame_quad(self, kernel_backend):
        cam = PinholeCamera.look_at([0, 0, 3], [0, 0, 0], [0, 1, 0], 20, 32, 32)
        (img,) = render_index_maps(quad_mesh(), [cam], (32, 32))
        assert set(np.unique(img).tolist()) <= {0, 1}

    def test_empty_scene(self):
        cam = PinholeCamera.look_at([0, 0, 3], [0, 0, 0], [0, 1, 0], 20, 8, 6)
        empty = TriMesh(np.zeros((0, 3)), np.zeros((0, 3)))
        (img,) = render_index_maps(empty, [cam], (8, 6))
        assert img.shape == (6, 8)
        assert np.all(img == BACKGROUND)

    def test_cube_front_occlusion(self, kernel_backend):
        mesh = box_mesh([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5])
        cam = PinholeCamera.look_at([0, 0, 3], [0, 0, 0], [0, 1, 0], 30, 24, 24)
        (img,) = render_index_maps(mesh, [cam], (24, 24))
        top = {int(t) for t in np.flatnonzero(mesh.face_normals()[:, 2] > 0.5)}
        seen = set(np.unique(img[img >= 0]).tolist())
        assert seen == top
        o, d = cam.rays(24, 24)
        for k in range(0, len(o), 37):
            t, tri = nearest_hit(mesh, o[k], d[k])
            assert img.ravel()[k] == (tri if math.isfinite(t) else BACKGROUND)

    def test_orthographic(self, kernel_backend):
        cam = OrthoCamera([0, 0, 5], [0, 0, -1], [0, 1, 0], 1.0)
        (img,) = render_index_maps(quad_mesh(), [cam], (10, 10))
        assert np.all(img >= 0)

    def test_bad_cameras(self):
        with pytest.raises(InvalidCamera):
            PinholeCamera(-1, 1, 0, 0, np.eye(3), np.zeros(3))
        with pytest.raises(InvalidCamera):
            PinholeCamera(1, 1, 0, 0, 2 * np.eye(3), np.zeros(3))
        with pytest.raises(InvalidCamera):
            camera_from_dict({"fx": 1})

    def test_camera_dict_round_trip(self):
        cam = PinholeCamera.look_at([1, 2, 3], [0, 0, 0], [0, 0, 1], 45, 64, 48)
        back = camera_from_dict(cam.to_dict())
        assert np.allclose(back.rotation, cam.rotation)
        assert back.fx == cam.fx

    def test_default_cameras_see_object(self, kernel_backend):
        mesh = box_mesh([0, 0, 0], [1, 1, 1])
        cams = default_cameras(mesh, Frame(), 3, resolution=(32, 32))
        for img in render_index_maps(mesh, cams, (32, 32)):
            assert (img >= 0).any()


class TestLift:
    def test_confidence_threshold(self):
        index = np.full((4, 4), 7)
        bits = np.ones((4, 4), bool)
        pred = ViewPrediction("v", [ImageMask(PartLabel.DOOR, 0.85, bits), ImageMask(PartLabel.DOOR, 0.9, bits),
                                    ImageMask(PartLabel.DOOR, 0.91, bits)])
        out = lift_view_masks(index, pred)
        assert [m.confidence for m in out] == [0.91]  # strictly above 0.9

    def test_background_ignored(self):
        index = np.full((13, 8), BACKGROUND)
        index.ravel()[:100] = 7
        bits = np.zeros_like(index, dtype=bool)
        bits.ravel()[:103] = True
        (m,) = lift_view_masks(index, ViewPrediction("v", [ImageMask(PartLabel.DRAWER, 0.95, bits)]))
        assert m.covered_triangles == {7: 100}

    def test_disjoint_masks(self):
        index = np.arange(16).reshape(4, 4)
        a = np.zeros((4, 4), bool)
        a[:2] = True
        pred = ViewPrediction("v", [ImageMask(PartLabel.DOOR, 0.95, a), ImageMask(PartLabel.DOOR, 0.95, ~a)])
        m1, m2 = lift_view_masks(index, pred)
        assert not set(m1.covered_triangles) & set(m2.covered_triangles)

    def test_coverage_fraction(self):
        index = np.zeros((1, 10), int)
        bits = np.zeros((1, 10), bool)
        bits[0, :4] = True
        pred = ViewPrediction("v", [ImageMask(PartLabel.DOOR, 0.95, bits)])
        assert lift_view_masks(index, pred) == []
        bits[0, 4] = True
        assert len(lift_view_masks(index, pred)) == 1

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            lift_view_masks(np.zeros((3, 3), int), ViewPrediction("v", [ImageMask(PartLabel.DOOR, 0.95, np.ones((2, 2), bool))]))


class TestReconcileViews:
    def test_merge_takes_higher_label(self):
        mesh = strip_mesh()
        seg = reconcile_view_masks([vmask(range(10), 0.92, "drawer"), vmask(range(10), 0.95, "door")], mesh)
        assert len(seg.parts) == 1
        assert seg.parts[0].label is PartLabel.DOOR
        assert seg.parts[0].triangle_ids.tolist() == list(range(10))

    def test_low_iou_keeps_both_and_assigns_shared(self):
        mesh = strip_mesh()
        # IoU = 4 / 8 = 0.5 on equal-area triangles; triangle 3 is shared
        a, b = vmask([0, 1, 2, 3, 4, 5], 0.95), vmask([2, 3, 4, 5, 6, 7], 0.92, "drawer")
        seg = reconcile_view_masks([b, a], mesh)
        assert len(seg.parts) == 2
        owner = seg.instance_index()
        assert seg.parts[owner[3]].confidence == 0.95

    def test_merge_threshold_is_strict(self):
        mesh = strip_mesh()
        # equal-area triangles: IoU 8 / 10 = 0.8 exactly, which does not merge
        a, b = vmask(range(9), 0.95), vmask(list(range(8)) + [9], 0.92)
        seg = reconcile_view_masks([a, b], mesh)
        assert len(seg.parts) == 2
        assert seg.parts[1].triangle_ids.tolist() == [9]
        # IoU 9 / 11 > 0.8 merges; the free triangle joins the first part
        f, g = vmask(range(10), 0.95), vmask(list(range(9)) + [10], 0.92)
        seg = reconcile_view_masks([f, g], mesh)
        assert len(seg.parts) == 1
        assert 10 in seg.parts[0].triangle_ids

    def test_zero_masks(self):
        seg = reconcile_view_masks([], strip_mesh())
        assert seg.parts == []
        assert len(seg.base_triangles) == 40

    def test_order_independent(self, rng):
        mesh = strip_mesh()
        masks = [vmask(rng.choice(40, 8, replace=False), float(c), view=f"v{i}")
                 for i, c in enumerate(rng.uniform(0.91, 1.0, 8))]
        ref = reconcile_view_masks(masks, mesh).instance_index()
        for _ in range(5):
            perm = [masks[i] for i in rng.permutation(len(masks))]
            assert np.array_equal(reconcile_view_masks(perm, mesh).instance_index(), ref)


def test_fuse_views_end_to_end(kernel_backend):
    mesh = box_mesh([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5])
    cam = PinholeCamera.look_at([0, 0, 3], [0, 0, 0], [0, 1, 0], 30, 24, 24)
    (img,) = render_index_maps(mesh, [cam], (24, 24))
    bits = img >= 0
    pred = ViewPrediction("front", [ImageMask(PartLabel.LID, 0.97, bits)])
    seg = fuse_views(mesh, [cam], [pred], (24, 24))
    (part,) = seg.parts
    assert part.label is PartLabel.LID
    assert set(part.triangle_ids.tolist()) == set(np.unique(img[bits]).tolist())
    with pytest.raises(ShapeMismatch):
        fuse_views(mesh, [cam, cam], [pred], (24, 24))


class TestReconcilePc:
    def setup_method(self):
        self.mesh = box_mesh([0, 0, 0], [1, 1, 1])
        self.cloud = sample_surface(self.mesh, 2000, include_vertices=True, seed=0)

    def tri_points(self, tris):
        return np.flatnonzero(np.isin(self.cloud.source_triangle, tris) & (self.cloud.vertex_id < 0))

    def test_identical_instances_drop_lower(self):
        ids = self.tri_points([0, 1])
        pred = PointCloudPrediction(len(self.cloud), [PointInstance(PartLabel.DRAWER, 0.7, ids),
                                                      PointInstance(PartLabel.DOOR, 0.9, ids)])
        seg = reconcile_pc_masks(pred, self.cloud, self.mesh)
        assert [p.label for p in seg.parts] == [PartLabel.DOOR]

    def test_low_iou_keeps_both(self):
        a = self.tri_points([0, 1, 2, 3])
        b = self.tri_points([2, 3, 4, 5, 6, 7])
        pred = PointCloudPrediction(len(self.cloud), [PointInstance(PartLabel.DRAWER, 0.6, b),
                                                      PointInstance(PartLabel.DOOR, 0.9, a)])
        seg = reconcile_pc_masks(pred, self.cloud, self.mesh)
        assert len(seg.parts) == 2
        door = [p for p in seg.parts if p.label is PartLabel.DOOR][0]
        assert {2, 3} <= set(door.triangle_ids.tolist())

    def test_half_cloud(self):
        ids = self.tri_points(list(range(6)))
        pred = PointCloudPrediction(len(self.cloud), [PointInstance(PartLabel.LID, 0.95, ids)])
        seg = reconcile_pc_masks(pred, self.cloud, self.mesh)
        assert seg.parts[0].triangle_ids.tolist() == list(range(6))
        assert seg.base_triangles.tolist() == list(range(6, 12))

    def test_dense_transfer(self):
        ids = self.tri_points(list(range(6)))
        dense = sample_surface(self.mesh, 5000, include_vertices=True, seed=9)
        pred = PointCloudPrediction(len(self.cloud), [PointInstance(PartLabel.LID, 0.95, ids)])
        seg = reconcile_pc_masks(pred, self.cloud, self.mesh, dense=dense)
        assert len(seg.parts) == 1
        assert set(seg.parts[0].triangle_ids.tolist()) <= set(range(12))

    def test_point_count_mismatch(self):
        with pytest.raises(ShapeMismatch):
            reconcile_pc_masks(PointCloudPrediction(3, []), self.cloud, self.mesh)


class TestInferLabels:
    def test_rules(self):
        f = Frame()
        inst = [
            (None, MotionSpec("prismatic", (0, 1, 0)), np.array([1.0, 0, 0])),
            (None, MotionSpec("revolute", (0, 0, 1), (0, 0, 0)), np.array([1.0, 0, 0])),
            (None, MotionSpec("revolute", (0, 1, 0), (0, 0, 0)), np.array([0, 0, 1.0])),
            (None, MotionSpec("revolute", (0, 1, 0), (0, 0, 0)), np.array([1.0, 0, 0])),
        ]
        assert infer_labels_from_motion(inst, f) == [PartLabel.DRAWER, PartLabel.DOOR, PartLabel.LID, PartLabel.DOOR]
