import math

import numpy as np
import pytest

from openparts.assets_io import MotionSpec, MotionType, PartInstance, PartLabel, PartSegmentation
from openparts.errors import DegenerateBox, EmptyInput, NotOpenable, SchemaError
from openparts.fixtures import chest, corner_cabinet, door_cabinet, dresser, motion_suite
from openparts.geometry import Frame, OrientedBox, TriMesh, box_mesh, concatenate, gravity_obb, point_line_distance
from openparts.motion import (
    BACK_FACE,
    FRONT,
    FRONT_FACE,
    UP,
    HandleEstimate,
    MotionTypeStats,
    detect_handle,
    predict_motion,
    predict_motion_type,
    predict_prismatic_axis,
    predict_revolute_axis,
    select_face,
    surface_centroid,
)

from oracles import rotation_about

LOCAL = Frame((0, 0, 1), (0, 1, 0))  # right = +x, front = +y, up = +z


def aligned_box(lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return OrientedBox((lo + hi) / 2, np.eye(3), (hi - lo) / 2)


def door_mesh(handle_x=None, handle_z=0.4, knob=0.03):
    """Door 0.6 wide, 0.8 tall, 0.02 thick in y in [0, 0.02] with an optional knob."""
    meshes = [box_mesh((0, 0, 0), (0.6, 0.02, 0.8))]
    if handle_x is not None:
        meshes.append(box_mesh((handle_x - 0.01, 0.02, handle_z - 0.04), (handle_x + 0.01, 0.02 + knob, handle_z + 0.04)))
    return concatenate(meshes)


class TestMotionType:
    def test_defaults(self):
        assert predict_motion_type(PartLabel.DRAWER) is MotionType.PRISMATIC
        assert predict_motion_type(PartLabel.LID) is MotionType.REVOLUTE
        assert predict_motion_type(PartLabel.DOOR) is MotionType.REVOLUTE

    def test_argmax_stats(self):
        stats = MotionTypeStats({"door": {"prismatic": 10, "revolute": 1}})
        assert predict_motion_type("door", stats) is MotionType.PRISMATIC
        assert predict_motion_type("drawer", stats) is MotionType.PRISMATIC  # unseen label

    def test_tie_falls_back(self):
        stats = MotionTypeStats({"drawer": {"prismatic": 3, "revolute": 3}})
        assert predict_motion_type("drawer", stats) is MotionType.PRISMATIC

    def test_base_rejected(self):
        with pytest.raises(NotOpenable):
            predict_motion_type(PartLabel.BASE)

    def test_stats_round_trip(self, tmp_path):
        segs = [f.seg for f in (dresser(2), door_cabinet("left"))]
        stats = MotionTypeStats.from_segmentations(segs)
        assert stats.counts[PartLabel.DRAWER][MotionType.PRISMATIC] == 2
        back = MotionTypeStats.load(stats.save(tmp_path / "s.json"))
        assert back.counts == stats.counts

    def test_bad_stats(self):
        with pytest.raises(SchemaError):
            MotionTypeStats({"door": {"revolute": -1, "prismatic": 2}})
        with pytest.raises(SchemaError):
            MotionTypeStats({"door": {"revolute": 0}})


class TestPrismatic:
    def test_direct(self):
        box = OrientedBox(np.zeros(3), np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]]), np.array([0.2, 0.01, 0.1]))
        assert np.allclose(predict_prismatic_axis(box, [-0.5, 0, 0]), [1, 0, 0])

    def test_flipped_when_centroid_in_front(self):
        box = OrientedBox(np.zeros(3), np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]]), np.array([0.2, 0.01, 0.1]))
        axis = predict_prismatic_axis(box, [0.5, 0.1, 0])
        # sign oracle: the axis must point into the half-space away from the centroid
        assert (np.zeros(3) - [0.5, 0.1, 0]) @ axis > 0

    def test_yaw_rotation(self):
        pts = box_mesh((-0.2, -0.01, 0), (0.2, 0.01, 0.2)).vertices
        r = rotation_about([0, 0, 1], math.radians(30))
        frame = LOCAL.rotated(r)
        box = gravity_obb(pts @ r.T, frame)
        axis = predict_prismatic_axis(box, r @ [0, -0.5, 0.1])
        assert np.allclose(axis, r @ [0, 1, 0], atol=1e-9)


class TestSelectFace:
    base = aligned_box((0, -0.5, 0), (0.6, 0.0, 0.8))

    def test_flush_front(self):
        door = aligned_box((0, 0, 0), (0.6, 0.02, 0.8))
        assert select_face(door, self.base) == BACK_FACE  # back face coincides with base front

    def test_inset_drawer(self):
        drawer = aligned_box((0.02, -0.02, 0.02), (0.58, 0.0, 0.4))
        # edge-distance oracle: sum of nearest distances from face edges to base edges
        assert select_face(drawer, self.base) == FRONT_FACE

    def test_symmetric_tie(self):
        part = aligned_box((0, -0.26, 0), (0.6, -0.24, 0.8))
        assert select_face(part, self.base) == FRONT_FACE

    def test_edge_distance_oracle(self, rng):
        from openparts.geometry import segment_distance

        for _ in range(20):
            lo = rng.uniform(-0.2, 0.5, 3)
            part = aligned_box(lo, lo + rng.uniform(0.02, 0.4, 3))
            d = {}
            for sign in (1, -1):
                d[sign] = sum(min(segment_distance(s, e, b0, b1) for b0, b1 in self.base.edges())
                              for s, e, _, _ in part.face_edges(FRONT, sign))
            expect = BACK_FACE if d[-1] < d[1] - 1e-9 else FRONT_FACE
            assert select_face(part, self.base) == expect


class TestHandle:
    def test_raised_knob(self):
        mesh = door_mesh(0.5)
        box = gravity_obb(mesh.vertices, LOCAL)
        h = detect_handle(mesh, box)
        assert h.region == "raised"
        assert np.linalg.norm(h.centroid - [0.5, 0.02 + 0.015, 0.4]) < 0.01

    def test_flat_plane(self):
        mesh = door_mesh()
        h = detect_handle(mesh, gravity_obb(mesh.vertices, LOCAL))
        assert h.region == "none"

    def test_concave_handle(self):
        # a recessed cup modelled inside the slab, between its back and front faces
        slab = box_mesh((0, 0, 0), (0.6, 0.02, 0.8))
        cup = box_mesh((0.46, 0.006, 0.36), (0.54, 0.012, 0.44))
        mesh = concatenate([slab, cup])
        h = detect_handle(mesh, gravity_obb(mesh.vertices, LOCAL), bins=32)
        assert h.region == "concave"
        assert np.linalg.norm(h.centroid - [0.5, 0.009, 0.4]) < 0.01

    @pytest.mark.parametrize("bins", [4, 7, 32, 50])
    def test_profile_length(self, bins):
        mesh = door_mesh(0.1)
        assert len(detect_handle(mesh, gravity_obb(mesh.vertices, LOCAL), bins=bins).depth_profile) == bins

    def test_empty(self):
        with pytest.raises(EmptyInput):
            detect_handle(TriMesh(np.zeros((0, 3)), np.zeros((0, 3))), aligned_box((0, 0, 0), (1, 1, 1)))


class TestRevoluteAxis:
    def rotate_part(self, points, axis, origin, deg):
        r = rotation_about(axis, math.radians(deg))
        return (points - origin) @ r.T + origin

    def test_right_handle_hinges_left_and_opens_outward(self):
        mesh = door_mesh(0.55)
        box = gravity_obb(mesh.vertices, LOCAL)
        h = detect_handle(mesh, box)
        axis, origin = predict_revolute_axis(box, BACK_FACE, h, PartLabel.DOOR, [0.3, -0.25, 0.4])
        assert abs(abs(axis[2]) - 1) < 1e-12
        assert point_line_distance([0, 0, 0.4], origin, axis) < 1e-9
        before = mesh.vertices.mean(axis=0)
        after = self.rotate_part(mesh.vertices, axis, origin, 10).mean(axis=0)
        assert after[1] > before[1]

    def test_lid_hinges_at_back(self):
        fx = chest()
        part = fx.seg.parts[0]
        lid = fx.mesh.submesh(part.triangle_ids)
        box = gravity_obb(lid.vertices, fx.frame)
        h = detect_handle(lid, box, axis=UP)
        axis, origin = predict_revolute_axis(box, BACK_FACE, h, PartLabel.LID, surface_centroid(fx.mesh))
        gt = part.motion
        assert np.allclose(axis, gt.axis, atol=1e-9)
        assert point_line_distance(origin, gt.origin, gt.axis_vec) < 1e-9

    def test_centered_handle_tie(self):
        mesh = door_mesh(0.3)
        box = gravity_obb(mesh.vertices, LOCAL)
        h = detect_handle(mesh, box)
        axis, origin = predict_revolute_axis(box, BACK_FACE, h, PartLabel.DOOR, [0.3, -0.2, 0.4])
        # vertical edges come first and side -1 (left) before +1
        assert abs(axis[2]) == pytest.approx(1.0)
        assert origin[0] == pytest.approx(0.0)

    def test_no_handle_door_hinges_away_from_object_center(self):
        mesh = door_mesh()
        box = gravity_obb(mesh.vertices, LOCAL)
        none = HandleEstimate("none", box.center, np.zeros(32))
        _, origin = predict_revolute_axis(box, BACK_FACE, none, PartLabel.DOOR, [1.0, -0.2, 0.4])
        assert origin[0] == pytest.approx(0.0)
        _, origin = predict_revolute_axis(box, BACK_FACE, none, PartLabel.DOOR, [-0.5, -0.2, 0.4])
        assert origin[0] == pytest.approx(0.6)

    def test_degenerate(self):
        box = OrientedBox(np.zeros(3), np.eye(3), np.array([0.0, 0.1, 0.0]))
        with pytest.raises(DegenerateBox):
            predict_revolute_axis(box, FRONT_FACE, HandleEstimate("none", np.zeros(3), np.zeros(4)),
                                  PartLabel.DOOR, np.zeros(3))


def _compare(fx, pred):
    for p, g in zip(pred.parts, fx.seg.parts):
        assert p.motion is not None, (fx.name, p.id)
        assert p.motion.motion_type is g.motion.motion_type, (fx.name, p.id)
        assert np.allclose(p.motion.axis, g.motion.axis, atol=1e-6), (fx.name, p.id)
        if g.motion.origin is not None:
            assert point_line_distance(p.motion.origin, g.motion.origin, g.motion.axis_vec) < 1e-6, (fx.name, p.id)


class TestPredictMotion:
    def test_three_drawer_dresser(self):
        fx = dresser(3)
        pred = predict_motion(fx.seg, fx.mesh, fx.frame)
        assert len(pred.parts) == 3
        for p in pred.parts:
            assert p.motion.motion_type is MotionType.PRISMATIC
            assert np.allclose(p.motion.axis, fx.frame.front_vec, atol=1e-6)

    def test_single_door_right_handle(self):
        fx = door_cabinet("right")
        pred = predict_motion(fx.seg, fx.mesh, fx.frame)
        _compare(fx, pred)
        # hinge at the left front edge of the cabinet
        left_front = fx.frame.to_world([0.0, 0.0, 0.4])[0]
        assert point_line_distance(left_front, pred.parts[0].motion.origin, pred.parts[0].motion.axis_vec) < 1e-9

    def test_empty_segmentation(self):
        fx = dresser(1)
        seg = PartSegmentation(fx.mesh.n_triangles, [])
        out = predict_motion(seg, fx.mesh, fx.frame)
        assert out.parts == []

    @pytest.mark.parametrize("fx", motion_suite(), ids=lambda f: f.name)
    def test_suite_exact(self, fx):
        _compare(fx, predict_motion(fx.seg, fx.mesh, fx.frame))

    def test_failure_is_isolated(self):
        fx = dresser(2)
        seg = fx.seg
        # a degenerate part: three coincident corners
        mesh = fx.mesh
        stats = MotionTypeStats({"door": {"revolute": 1, "prismatic": 0}})
        diag = []
        flat_tri = TriMesh(np.vstack([mesh.vertices, [[0, 0, 5], [0, 0, 5.0], [0, 0, 5]]]),
                           np.vstack([mesh.triangles, [[len(mesh.vertices), len(mesh.vertices) + 1, len(mesh.vertices) + 2]]]))
        seg2 = PartSegmentation(flat_tri.n_triangles, [
            PartInstance("bad", "door", [mesh.n_triangles]),
            PartInstance("good", "drawer", seg.parts[1].triangle_ids),
        ])
        out = predict_motion(seg2, flat_tri, fx.frame, stats, diagnostics=diag)
        assert out.parts[0].motion is None
        assert out.parts[1].motion is not None
        assert len(diag) == 1 and "bad" in diag[0]


def test_corner_and_chest_fixtures_have_truth():
    for fx in (corner_cabinet(), chest()):
        assert all(p.motion is not None for p in fx.seg.parts)


def test_surface_centroid_of_box():
    assert np.allclose(surface_centroid(box_mesh((0, 0, 0), (1, 2, 3))), [0.5, 1, 1.5])
