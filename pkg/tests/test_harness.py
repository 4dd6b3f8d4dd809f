"""Dataset generation, metrics, end-to-end evaluation and configuration."""
import dataclasses
import math
import os

import numpy as np
import pytest

from pose_retrieval.errors import ConfigurationError, EmptyInputError, ParameterError, ParseError, ShapeError
from pose_retrieval.geometry import CameraIntrinsics
from pose_retrieval.harness.config import Config, apply_overrides, dump_config, load_config, parse_config
from pose_retrieval.harness.dataset import DatasetManifest, PoseRanges, audit_projections, generate_dataset
from pose_retrieval.harness.meshes import procedural_meshes, write_meshes
from pose_retrieval.harness.metrics import acc_pi6, dim_mae, med_err, top1_acc
from pose_retrieval.harness.pipeline import SampleResult, aggregate, build_depth_bank, evaluate_pipeline
from pose_retrieval.learning.net import NetConfig, TinyNet
from pose_retrieval.learning.train import depth_to_input
from pose_retrieval.meshio import load_obj, mesh_extents
from pose_retrieval.renderer import render_depth
from pose_retrieval.retrieval import PoseBinGrid, build_db

K = CameraIntrinsics.default()
RANGES = PoseRanges(tz=(2.0, 2.4))


@pytest.fixture(scope="module")
def meshes():
    return procedural_meshes()[:3]


@pytest.fixture(scope="module")
def small_set(meshes, tmp_path_factory):
    return generate_dataset(meshes, 3, str(tmp_path_factory.mktemp("data")), RANGES, K, seed=4, split="val")


class TestMeshes:
    def test_corpus(self, tmp_path):
        ms = procedural_meshes()
        assert len(ms) >= 8
        assert len({m.id for m in ms}) == len(ms)
        for m in ms:
            ext = mesh_extents(m)
            assert ext.max() == pytest.approx(1.0)
            assert np.allclose(m.vertices.min(axis=0) + m.vertices.max(axis=0), 0, atol=1e-12)
        paths = write_meshes(tmp_path)
        assert len(paths) == len(ms)
        assert np.array_equal(load_obj(str(paths[0])).vertices, ms[0].vertices)


class TestDataset:
    def test_counts_and_files(self, small_set, meshes):
        assert len(small_set) == 9
        for r in small_set.records:
            assert os.path.exists(small_set.path(r.shaded_path))
            assert os.path.exists(small_set.path(r.depth_path))
        assert small_set.shaded_images().shape == (9, 64, 64)
        assert small_set.targets().shape == (9, 19)
        assert small_set.mesh_ids()[:3] == [meshes[0].id] * 3

    def test_same_seed_byte_identical(self, meshes, tmp_path):
        a = generate_dataset(meshes[:2], 3, str(tmp_path / "a"), RANGES, K, seed=7)
        generate_dataset(meshes[:2], 3, str(tmp_path / "b"), RANGES, K, seed=7)
        assert len(a) == 6
        assert (tmp_path / "a" / "train.json").read_bytes() == (tmp_path / "b" / "train.json").read_bytes()
        for r in a.records:
            assert (tmp_path / "a" / r.shaded_path).read_bytes() == (tmp_path / "b" / r.shaded_path).read_bytes()
        c = generate_dataset(meshes[:2], 3, str(tmp_path / "c"), RANGES, K, seed=8)
        assert c.to_json() != a.to_json()

    def test_audit(self, small_set):
        assert audit_projections(small_set) <= 1e-9
        bad = DatasetManifest.from_json(small_set.to_json(), small_set.root)
        bad.records[0].projections[0][0] += 1e-6
        with pytest.raises(AssertionError):
            audit_projections(bad)

    def test_manifest_round_trip(self, small_set, tmp_path):
        small_set.save(tmp_path / "m.json")
        back = DatasetManifest.load(tmp_path / "m.json")
        assert back == small_set
        assert back.to_json() == small_set.to_json()

    def test_pose_ranges_respected(self, small_set):
        for r in small_set.records:
            az, el, th = np.degrees(r.viewpoint)
            assert -30 <= el <= 60 and -30 <= th <= 30
            assert 2.0 <= r.translation[2] <= 2.4

    def test_errors(self, tmp_path, meshes):
        with pytest.raises(EmptyInputError):
            generate_dataset([], 3, str(tmp_path))
        with pytest.raises(ParameterError):
            generate_dataset(meshes, 0, str(tmp_path))


class TestMetrics:
    def test_med_err(self):
        assert med_err([0.1, 0.3, 0.2]) == 0.2
        assert med_err([0.7]) == 0.7
        assert med_err([0.1, 0.2, 0.4, 0.3]) == pytest.approx(0.25)
        with pytest.raises(EmptyInputError):
            med_err([])

    def test_acc(self):
        assert acc_pi6(np.radians([10, 40])) == 0.5
        assert acc_pi6([0, 0, 0]) == 1.0
        # strict inequality at the threshold
        assert acc_pi6([math.pi / 6]) == 0.0
        with pytest.raises(EmptyInputError):
            acc_pi6([])

    def test_top1(self):
        assert top1_acc([("a", "a"), ("b", "b")]) == 1.0
        assert top1_acc([("a", "b"), (None, "b")]) == 0.0
        assert top1_acc([("a", "a"), ("b", "c"), ("c", "c"), ("d", "a")]) == 0.5
        with pytest.raises(EmptyInputError):
            top1_acc([])

    def test_dim_mae(self):
        g = np.array([[0.5, 0.5, 0.5]])
        assert np.array_equal(dim_mae(g, g), [0, 0, 0])
        assert np.allclose(dim_mae(g + [0.1, 0, 0], g), [0.1, 0, 0])
        p = np.array([[0.1, 0.2, 0.3], [0.5, 0.5, 0.5], [0.9, 0.1, 0.4]])
        t = np.array([[0.2, 0.2, 0.1], [0.5, 0.1, 0.6], [0.6, 0.1, 0.4]])
        # per-axis |diff|: x (0.1, 0, 0.3), y (0, 0.4, 0), z (0.2, 0.1, 0)
        assert np.allclose(dim_mae(p, t), [0.1, 0.0, 0.1])
        with pytest.raises(ShapeError):
            dim_mae(p, t[:2])
        with pytest.raises(EmptyInputError):
            dim_mae(np.zeros((0, 3)), np.zeros((0, 3)))


def fake_results():
    mk = lambda sid, mid, e, got: SampleResult(sid, mid, e, [0.5, 0.5, 0.5], {"gt": got, "rand": "x"})
    return [mk("s0", "b", 0.1, "b"), mk("s1", "b", 0.9, "a"), mk("s2", "a", 0.2, "a"),
            mk("s3", "a", 0.3, "a"), mk("s4", "a", 0.05, "b")]


class TestAggregate:
    def test_unweighted_category_mean(self):
        rep = aggregate(fake_results(), ["gt", "rand"], [[0.5, 0.5, 0.5]] * 5)
        assert rep.categories == ["a", "b"]
        assert rep.med_err == {"a": 0.2, "b": 0.5}
        assert rep.mean_med_err == pytest.approx(0.35)
        assert rep.acc == {"a": 1.0, "b": 0.5}
        assert rep.mean_acc == 0.75
        # pooled top-1 would be 3/5; the category mean is (2/3 + 1/2) / 2
        assert rep.mean_top1("gt") == pytest.approx((2 / 3 + 0.5) / 2)
        assert rep.mean_top1("rand") == 0.0

    def test_outputs(self):
        rep = aggregate(fake_results(), ["gt", "rand"], [[0.5, 0.5, 0.5]] * 5)
        csv = rep.to_csv()
        assert csv.splitlines()[0].startswith("category")
        assert len(rep.rows()) == 3
        assert "mean" in rep.to_table()

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            aggregate([], ["gt"], [])


@pytest.fixture(scope="module")
def parts(meshes):
    synth = TinyNet(NetConfig(channels=(4, 4), descriptor_dim=8, head_dim=0), seed=0)
    db = build_db(meshes, PoseBinGrid(30, (0, 330), (-30, 60), (-30, 30)), synth, K, tz=2.2)
    return synth, db


class TestPipeline:
    def test_oracle(self, small_set, meshes, parts):
        synth, db = parts
        rep = evaluate_pipeline(small_set, None, synth, db, meshes, k=K, ranges=RANGES, oracle=True)
        assert rep.n_samples == 9 and not rep.failures
        assert all(v < 1e-6 for v in rep.med_err.values())
        assert rep.mean_acc == 1.0
        assert rep.mean_top1("gt") == 1.0
        assert rep.mean_top1("pred") == 1.0
        assert np.allclose(rep.dim_mae, 0)

    def test_untrained_net_runs_and_is_deterministic(self, small_set, meshes, parts):
        synth, db = parts
        pose_net = TinyNet(NetConfig(channels=(4, 4), descriptor_dim=8), seed=3)
        a = evaluate_pipeline(small_set, pose_net, synth, db, meshes, k=K, ranges=RANGES, seed=5)
        b = evaluate_pipeline(small_set, pose_net, synth, db, meshes, k=K, ranges=RANGES, seed=5)
        assert a == b
        assert a.to_csv() == b.to_csv()
        assert all(0 <= a.acc[c] <= 1 and a.med_err[c] >= 0 for c in a.categories)

    def test_descriptor_mismatch(self, small_set, meshes, parts):
        synth, db = parts
        with pytest.raises(ConfigurationError):
            evaluate_pipeline(small_set, TinyNet(NetConfig(channels=(4, 4))), synth, db, meshes, k=K)

    def test_empty_manifest(self, meshes, parts):
        synth, db = parts
        with pytest.raises(EmptyInputError):
            evaluate_pipeline(DatasetManifest([], K), None, synth, db, meshes, oracle=True)

    def test_depth_bank(self, small_set, meshes):
        bank, labels = build_depth_bank(small_set, meshes, K)
        assert bank.shape == (9, 3, 64, 64) and bank.dtype == np.float32
        assert labels.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2]
        # the own-mesh slot is the record's depth image
        depth = small_set.depth_images()
        covered = depth[0] > 0
        assert np.array_equal(bank[0, 0] > 0, covered)
        assert np.allclose(bank[0, 0][covered], 5.0 / depth[0][covered], rtol=1e-6)
        own, _ = build_depth_bank(small_set, meshes, K, negative_scale="own")
        both, _ = build_depth_bank(small_set, meshes, K, negative_scale="both")
        assert both.shape == (9, 3, 2, 64, 64)
        assert np.array_equal(both[:, :, 0], bank)
        assert np.array_equal(both[:, :, 1], own)
        rows = np.arange(len(labels))
        assert np.array_equal(own[rows, labels], bank[rows, labels])
        pose = small_set.records[0].pose
        assert np.array_equal(own[0, 1], depth_to_input(render_depth(meshes[1], pose, K)).astype(np.float32))
        with pytest.raises(ConfigurationError):
            build_depth_bank(small_set, meshes, K, negative_scale="stretched")


class TestConfig:
    def test_round_trip(self):
        cfg = Config()
        assert parse_config(dump_config(cfg)) == cfg
        other = apply_overrides(cfg, [("pose.lr", "3e-4"), ("pose_net.channels", "4, 8"), ("seed", "9"),
                                      ("grid.elevation", "-30, 30"), ("pose_net.global_pool", "true")])
        assert parse_config(dump_config(other)) == other
        assert other.pose.lr == 3e-4 and other.pose_net.channels == (4, 8) and other.seed == 9
        assert other.pose_net.global_pool is True

    def test_file(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("# comment\n\nseed = 4  # trailing\nloss.margin = 0.5\n")
        cfg = load_config(p)
        assert cfg.seed == 4 and cfg.loss.margin == 0.5
        assert cfg.pose == Config().pose

    @pytest.mark.parametrize("text", ["nosuch = 1", "pose.nosuch = 1", "nosection.lr = 1", "seed = abc",
                                      "loss.margin = -1", "grid.step = 7", "pose = 1", "negative_scale = stretched"])
    def test_bad_values(self, text):
        with pytest.raises(ConfigurationError):
            parse_config(text)

    def test_syntax_error_line(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_config("seed = 1\nthis is not a pair\n")

    def test_sections_are_dataclasses(self):
        for f in dataclasses.fields(Config):
            v = getattr(Config(), f.name)
            assert dataclasses.is_dataclass(v) or isinstance(v, (int, float, str))
