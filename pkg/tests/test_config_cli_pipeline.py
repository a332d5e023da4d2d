import json

import numpy as np
import pytest

from openparts import fixtures
from openparts.assets_io import load_annotation, load_mesh, save_annotation, save_mesh
from openparts.cli import main
from openparts.config import PipelineConfig
from openparts.errors import SchemaError
from openparts.pipeline import EXIT_OBJECT_FAILURES, exit_code, run_pipeline


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = PipelineConfig(merge_iou=0.7, bins=16, wall_thickness=0.01, seed=3)
        assert PipelineConfig.load(cfg.save(tmp_path / "c.json")) == cfg

    def test_partial_keeps_defaults(self):
        cfg = PipelineConfig.from_dict({"knn_k": 5})
        assert cfg.knn_k == 5 and cfg.merge_iou == PipelineConfig().merge_iou

    @pytest.mark.parametrize("bad", [{"merge_iuo": 0.5}, {"merge_iou": 1.5}, {"knn_k": 2.5},
                                     {"fps_points": 10, "sample_points": 5}, {"bins": 2}, []])
    def test_rejects(self, bad):
        with pytest.raises(SchemaError):
            PipelineConfig.from_dict(bad)

    def test_replace_ignores_none(self):
        cfg = PipelineConfig().replace(seed=None, bins=8)
        assert cfg.bins == 8 and cfg.seed == 0


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Five suite objects as OBJ meshes with ground-truth annotations."""
    d = tmp_path_factory.mktemp("corpus")
    for f in fixtures.motion_suite()[:5]:
        save_mesh(f.mesh, d / f"{f.name}.obj")
        save_annotation(f.seg, f.frame, d / f"{f.name}.json")
    return d


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestPipeline:
    def test_all_succeed(self, corpus, tmp_path):
        m = run_pipeline(corpus, "gt", tmp_path / "out")
        assert (m["succeeded"], m["total"]) == (5, 5)
        assert exit_code(m) == 0
        for rec in m["objects"]:
            assert (tmp_path / "out" / rec["urdf"]).exists()

    def test_corrupt_mesh_isolated(self, corpus, tmp_path):
        src = tmp_path / "in"
        src.mkdir()
        for p in corpus.iterdir():
            (src / p.name).write_bytes(p.read_bytes())
        (src / "broken.obj").write_text("v 0 0 zero\nf 1 2 3\n")
        m = run_pipeline(src, "gt", tmp_path / "out")
        assert (m["succeeded"], m["failed"], m["total"]) == (5, 1, 6)
        (bad,) = [r for r in m["objects"] if r["status"] != "ok"]
        assert bad["name"] == "broken" and bad["error"].startswith("ParseError")
        assert exit_code(m) == EXIT_OBJECT_FAILURES
        assert json.loads((tmp_path / "out" / "broken" / "log.json").read_text())[-1]["status"] == "failed"

    def test_rerun_is_bit_identical(self, corpus, tmp_path):
        run_pipeline(corpus, "gt", tmp_path / "a")
        run_pipeline(corpus, "gt", tmp_path / "b")
        a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
        assert a.keys() == b.keys()
        assert all(a[k] == b[k] for k in a)

    def test_unknown_source(self, corpus, tmp_path):
        with pytest.raises(ValueError):
            run_pipeline(corpus, "magic", tmp_path)


class TestCli:
    def test_pipeline_exit_codes(self, corpus, tmp_path):
        assert main(["pipeline", "--mesh-dir", str(corpus), "--seg-source", "gt", "--out", str(tmp_path / "o")]) == 0
        (corpus.parent / "bad").mkdir(exist_ok=True)
        bad = corpus.parent / "bad"
        (bad / "x.obj").write_text("garbage\n")
        assert main(["pipeline", "--mesh-dir", str(bad), "--seg-source", "gt", "--out", str(tmp_path / "p")]) == 3

    def test_bad_config_is_usage_error(self, corpus, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"not_a_key": 1}))
        assert main(["pipeline", "--mesh-dir", str(corpus), "--seg-source", "gt", "--out", str(tmp_path),
                     "--config", str(cfg)]) == 2

    def test_argparse_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["sample"])
        assert exc.value.code == 2

    def test_missing_input_fails(self, tmp_path):
        assert main(["sample", "--mesh", str(tmp_path / "none.obj"), "-o", str(tmp_path / "x.ply")]) == 1

    def test_sample(self, corpus, tmp_path):
        out = tmp_path / "c.ply"
        name = sorted(corpus.glob("*.obj"))[0]
        assert main(["sample", "--mesh", str(name), "--points", "2000", "--fps", "300", "-o", str(out)]) == 0
        from openparts.sampling import read_point_cloud

        assert len(read_point_cloud(out)) == 300

    def test_predict_motion_matches_ground_truth(self, corpus, tmp_path):
        f = fixtures.motion_suite()[0]
        bare = type(f.seg)(f.seg.n_triangles, [type(p)(p.id, p.label, p.triangle_ids, p.confidence)
                                                for p in f.seg.parts])
        save_annotation(bare, f.frame, tmp_path / "bare.json")
        out = tmp_path / "pred.json"
        assert main(["predict-motion", "--mesh", str(corpus / f"{f.name}.obj"), "--seg", str(tmp_path / "bare.json"),
                     "-o", str(out)]) == 0
        mesh = load_mesh(corpus / f"{f.name}.obj")
        pred, _ = load_annotation(out, mesh)
        for p, g in zip(pred.parts, f.seg.parts):
            assert p.motion.motion_type is g.motion.motion_type
            assert abs(abs(np.dot(p.motion.axis, g.motion.axis)) - 1) < 1e-6

    def test_complete_interior_and_export(self, corpus, tmp_path):
        name = sorted(corpus.glob("*.obj"))[0].stem
        for cmd in ("complete-interior", "export-urdf"):
            out = tmp_path / cmd
            assert main([cmd, "--mesh", str(corpus / f"{name}.obj"), "--seg", str(corpus / f"{name}.json"),
                         "-o", str(out)]) == 0
            assert list(out.glob("*.urdf"))

    def test_strip_and_countertop(self, tmp_path):
        save_mesh(fixtures.cube_in_cube(), tmp_path / "cc.obj")
        assert main(["strip-interior", "--mesh", str(tmp_path / "cc.obj"), "--views", "16", "--res", "64",
                     "-o", str(tmp_path / "s.obj")]) == 0
        assert load_mesh(tmp_path / "s.obj").n_triangles == 12
        save_mesh(fixtures.missing_top_cabinet(), tmp_path / "mt.obj")
        assert main(["add-countertop", "--mesh", str(tmp_path / "mt.obj"), "-o", str(tmp_path / "t.obj")]) == 0
        assert load_mesh(tmp_path / "t.obj").n_triangles > load_mesh(tmp_path / "mt.obj").n_triangles

    def test_evaluate(self, corpus, tmp_path):
        out = tmp_path / "r.json"
        table = tmp_path / "r.md"
        assert main(["evaluate", "--gt-dir", str(corpus), "--pred-dir", str(corpus), "--out", str(out),
                     "--table", str(table)]) == 0
        report = json.loads(out.read_text())
        assert report["n_objects"] == 5
        assert report["segmentation"]["micro"]["f1"] == 1.0
        assert "+MAO" in table.read_text()

    def test_evaluate_nothing(self, tmp_path):
        assert main(["evaluate", "--gt-dir", str(tmp_path), "--pred-dir", str(tmp_path),
                     "--out", str(tmp_path / "r.json")]) == 1
