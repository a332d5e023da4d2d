import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from openparts.assets_io import (
    ArticulatedObject,
    MotionSpec,
    MotionType,
    PartInstance,
    PartLabel,
    PartSegmentation,
    export_urdf,
    load_annotation,
    load_mesh,
    parse_urdf,
    rle_decode,
    rle_encode,
    save_annotation,
    save_mesh,
)
from openparts.errors import (
    IndexOutOfRange,
    InvalidMotion,
    OverlapError,
    ParseError,
    SchemaError,
    UnsupportedFace,
)
from openparts.geometry import Frame, TriMesh, box_mesh

CUBE_OBJ = """\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def test_obj_cube(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ)
    m = load_mesh(p)
    assert m.n_triangles == 12
    assert m.total_area == pytest.approx(6.0)


def test_obj_quad_fan(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    m = load_mesh(p)
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_obj_slash_and_negative_indices(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf -3/1 -2/2 -1/3\n")
    m = load_mesh(p)
    assert m.triangles.tolist() == [[0, 1, 2]]


def test_obj_pentagon_rejected(tmp_path):
    p = tmp_path / "pent.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0.5 1.5 0\nv 0 1 0\nf 1 2 3 4 5\n")
    with pytest.raises(UnsupportedFace):
        load_mesh(p)


def test_obj_garbage(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 zero\nf 1 2 3\n")
    with pytest.raises(ParseError):
        load_mesh(p)


def test_missing_file_and_extension(tmp_path):
    with pytest.raises(ParseError):
        load_mesh(tmp_path / "nope.obj")
    (tmp_path / "a.stl").write_text("solid")
    with pytest.raises(ParseError):
        load_mesh(tmp_path / "a.stl")


def test_ply_colors_bit_exact(tmp_path, rng):
    m = box_mesh([0, 0, 0], [1, 1, 1])
    m.colors = rng.integers(0, 256, (m.n_vertices, 3)).astype(np.uint8)
    save_mesh(m, tmp_path / "c.ply")
    back = load_mesh(tmp_path / "c.ply")
    assert np.array_equal(back.colors, m.colors)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)


@pytest.mark.parametrize("ext", [".obj", ".ply", ".glb"])
def test_round_trip_formats(tmp_path, ext, rng):
    m = box_mesh([0, 0, 0], [1, 2, 3])
    m.uvs = rng.uniform(0, 1, (m.n_vertices, 2))
    save_mesh(m, tmp_path / f"m{ext}")
    back = load_mesh(tmp_path / f"m{ext}")
    assert back.n_triangles == 12
    assert np.allclose(back.vertices[back.triangles], m.vertices[m.triangles], atol=1e-6)
    assert back.total_area == pytest.approx(m.total_area, rel=1e-6)


def _seg_dict(parts):
    return {"frame": {"up": [0, 0, 1], "front": [1, 0, 0]}, "parts": parts}


def test_annotation_partition(tmp_path):
    mesh = box_mesh([0, 0, 0], [1, 1, 1])
    p = tmp_path / "a.json"
    p.write_text(json.dumps(_seg_dict([{"id": "d1", "label": "drawer", "triangles": list(range(6))}])))
    seg, frame = load_annotation(p, mesh)
    assert len(seg.parts) == 1
    assert seg.base_triangles.tolist() == list(range(6, 12))
    assert frame == Frame()


def test_annotation_out_of_range(tmp_path):
    mesh = box_mesh([0, 0, 0], [1, 1, 1])
    p = tmp_path / "a.json"
    p.write_text(json.dumps(_seg_dict([{"id": "d1", "label": "drawer", "triangles": [12]}])))
    with pytest.raises(IndexOutOfRange):
        load_annotation(p, mesh)


def test_annotation_overlap(tmp_path):
    mesh = box_mesh([0, 0, 0], [1, 1, 1])
    p = tmp_path / "a.json"
    p.write_text(json.dumps(_seg_dict([
        {"id": "a", "label": "door", "triangles": [1, 3]},
        {"id": "b", "label": "drawer", "triangles": [3, 4]},
    ])))
    with pytest.raises(OverlapError):
        load_annotation(p, mesh)


@pytest.mark.parametrize("bad", [
    {"parts": [{"id": "a", "label": "shelf", "triangles": [0]}]},
    {"parts": [{"id": "a", "label": "base", "triangles": [0]}]},
    {"parts": [{"id": "a", "label": "door", "triangles": [0]}, {"id": "a", "label": "door", "triangles": [1]}]},
    {"frame": {"up": [0, 0, 1], "front": [0, 0.6, 0.8]}, "parts": []},
])
def test_annotation_schema_errors(tmp_path, bad):
    p = tmp_path / "a.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(SchemaError):
        load_annotation(p, box_mesh([0, 0, 0], [1, 1, 1]))


def test_annotation_bad_motion(tmp_path):
    p = tmp_path / "a.json"
    p.write_text(json.dumps({"parts": [{"id": "a", "label": "door", "triangles": [0],
                                        "motion": {"type": "revolute", "axis": [0, 0, 1]}}]}))
    with pytest.raises(InvalidMotion):
        load_annotation(p, box_mesh([0, 0, 0], [1, 1, 1]))


def test_annotation_round_trip(tmp_path):
    mesh = box_mesh([0, 0, 0], [1, 1, 1])
    seg = PartSegmentation(12, [
        PartInstance("d", PartLabel.DOOR, [0, 1], 0.7,
                     MotionSpec(MotionType.REVOLUTE, (0, 0, 1), (0.1, 0.2, 0.3), (0.0, 1.5))),
        PartInstance("k", PartLabel.DRAWER, [5], 1.0, MotionSpec("prismatic", (1, 0, 0))),
    ])
    save_annotation(seg, Frame(), tmp_path / "s.json")
    back, _ = load_annotation(tmp_path / "s.json", mesh)
    assert [p.id for p in back.parts] == ["d", "k"]
    assert back.parts[0].motion == seg.parts[0].motion
    assert back.parts[1].motion == seg.parts[1].motion
    assert back.parts[0].confidence == 0.7


def test_motion_spec_validation():
    with pytest.raises(InvalidMotion):
        MotionSpec("prismatic", (1, 1, 0))
    with pytest.raises(InvalidMotion):
        MotionSpec("prismatic", (1, 0, 0), (0, 0, 0))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_rle_round_trip(w, h, seed):
    mask = np.random.default_rng(seed).random((h, w)) < 0.4
    assert np.array_equal(rle_decode(rle_encode(mask), w, h), mask)


def test_rle_rejects_wrong_total():
    with pytest.raises(SchemaError):
        rle_decode([1, 2], 2, 2)


def _one_part_object(motion):
    base = box_mesh([0, 0, 0], [1, 1, 1])
    part = box_mesh([1, 0.1, 0.1], [1.02, 0.9, 0.5])
    from openparts.assets_io import ArticulatedPart

    return ArticulatedObject(base, [ArticulatedPart("p", part, PartLabel.DRAWER
                                                    if motion.motion_type is MotionType.PRISMATIC
                                                    else PartLabel.DOOR, motion)], Frame())


def test_urdf_prismatic(tmp_path):
    obj = _one_part_object(MotionSpec("prismatic", (1, 0, 0), None, (0.0, 0.4)))
    man = export_urdf(obj, tmp_path, "thing")
    text = open(man["urdf"]).read()
    assert 'type="prismatic"' in text
    (joint,) = parse_urdf(man["urdf"])
    assert joint.axis == (1.0, 0.0, 0.0)
    assert (joint.lower, joint.upper) == (0.0, 0.4)
    assert len(man["meshes"]) == 2


def test_urdf_revolute_round_trip(tmp_path):
    motion = MotionSpec("revolute", (0, 0, 1), (1.0, 0.1, 0.3))
    man = export_urdf(_one_part_object(motion), tmp_path)
    (joint,) = parse_urdf(man["urdf"])
    assert joint.joint_type == "revolute"
    assert np.allclose(joint.origin, motion.origin, atol=1e-6)
    assert np.allclose(joint.axis, motion.axis, atol=1e-6)
    assert joint.upper == pytest.approx(np.pi / 2)


def test_urdf_meshes_stay_in_place(tmp_path):
    motion = MotionSpec("revolute", (0, 0, 1), (1.0, 0.1, 0.3))
    obj = _one_part_object(motion)
    man = export_urdf(obj, tmp_path)
    part_mesh = load_mesh([p for p in man["meshes"] if "door" in p][0])
    # visual origin offsets by -origin and the joint adds it back
    assert np.allclose(part_mesh.vertices, obj.parts[0].mesh.vertices, atol=1e-9)
    import xml.etree.ElementTree as ET

    root = ET.parse(man["urdf"]).getroot()
    link = [l for l in root.findall("link") if l.get("name") != "base"][0]
    off = [float(x) for x in link.find("visual/origin").get("xyz").split()]
    assert np.allclose(off, -np.asarray(motion.origin))


def test_segmentation_accessors():
    seg = PartSegmentation(5, [PartInstance("a", "door", [1, 2]), PartInstance("b", "lid", [4])])
    assert seg.instance_index().tolist() == [-1, 0, 0, -1, 1]
    assert seg.semantic_labels().tolist() == ["base", "door", "door", "base", "lid"]
    with pytest.raises(KeyError):
        seg.part("zz")


def test_from_segmentation_splits_mesh():
    mesh = box_mesh([0, 0, 0], [1, 1, 1])
    seg = PartSegmentation(12, [PartInstance("a", "drawer", [0, 1], 1.0, MotionSpec("prismatic", (1, 0, 0))),
                                PartInstance("b", "drawer", [2, 3])])
    obj = ArticulatedObject.from_segmentation(mesh, seg, Frame())
    assert len(obj.parts) == 1
    assert obj.base.n_triangles == 10
