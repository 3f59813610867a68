"""GFDS container and experiment-config serialization."""

import json

import numpy as np
import pytest

from gridformer.dataset import Dataset, read_arrays, write_arrays
from gridformer.experiment import (ExperimentConfig, config_from_dict,
                                   config_to_dict, load_config, save_config,
                                   shape_from_dict, shape_to_dict)
from gridformer.fields import ShapeSpec


class TestGFDS:
    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {
            "points": rng.uniform(size=(10, 3)).astype("<f4"),
            "labels": rng.integers(0, 2, 7).astype("u1"),
            "counts": rng.integers(0, 1000, 4).astype("<u4"),
        }
        path = str(tmp_path / "d.gfds")
        write_arrays(path, arrays)
        back = read_arrays(path)
        assert set(back) == set(arrays)
        for k in arrays:
            assert back[k].dtype == arrays[k].dtype
            assert np.array_equal(back[k], arrays[k])

    def test_write_is_deterministic(self, tmp_path):
        arrays = {"x": np.arange(12, dtype="<f4").reshape(3, 4)}
        p1, p2 = str(tmp_path / "a"), str(tmp_path / "b")
        write_arrays(p1, arrays)
        write_arrays(p2, arrays)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_magic_bytes(self, tmp_path):
        path = str(tmp_path / "d.gfds")
        write_arrays(path, {})
        assert open(path, "rb").read(4) == b"GFDS"

    def test_rejects_wrong_magic(self, tmp_path):
        path = str(tmp_path / "bad")
        with open(path, "wb") as f:
            f.write(b"XXXX" + b"\0" * 8)
        with pytest.raises(ValueError):
            read_arrays(path)

    def test_rejects_unsupported_dtype(self, tmp_path):
        with pytest.raises(ValueError):
            write_arrays(str(tmp_path / "d"), {"x": np.zeros(3, dtype="<f8")})

    def test_dataset_requires_core_arrays(self, tmp_path):
        path = str(tmp_path / "d.gfds")
        write_arrays(path, {"points": np.zeros((2, 3), dtype="<f4")})
        with pytest.raises(ValueError):
            Dataset.load(path)

    def test_dataset_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        ds = Dataset(
            points=rng.uniform(size=(5, 3)).astype("<f4"),
            queries=rng.uniform(size=(8, 3)).astype("<f4"),
            labels=rng.integers(0, 2, 8).astype("u1"),
            boundary_mask=rng.integers(0, 2, 8).astype("u1"),
        )
        path = str(tmp_path / "d.gfds")
        ds.save(path)
        back = Dataset.load(path)
        for attr in ("points", "queries", "labels", "boundary_mask"):
            assert np.array_equal(getattr(back, attr), getattr(ds, attr))

    def test_optional_boundary_mask(self, tmp_path):
        ds = Dataset(points=np.zeros((2, 3), dtype="<f4"),
                     queries=np.zeros((2, 3), dtype="<f4"),
                     labels=np.zeros(2, dtype="u1"))
        path = str(tmp_path / "d.gfds")
        ds.save(path)
        assert Dataset.load(path).boundary_mask is None


class TestExperimentConfig:
    def test_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(shape=ShapeSpec.union(
            ShapeSpec.sphere(center=(0.4, 0.4, 0.4), radius=0.2),
            ShapeSpec.torus(),
        ))
        path = str(tmp_path / "c.json")
        save_config(path, cfg)
        back = load_config(path)
        assert config_to_dict(back) == config_to_dict(cfg)

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            config_from_dict({"dta": {}})

    def test_unknown_section_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            config_from_dict({"train": {"stage1_lr": 1e-4, "lr": 1e-3}})

    def test_unknown_shape_key_rejected(self):
        with pytest.raises(ValueError, match="unknown key"):
            shape_from_dict({"kind": "sphere", "radiu": 0.2})

    def test_defaults_without_sections(self):
        cfg = config_from_dict({})
        assert cfg.data.n_points == 3000
        assert cfg.data.sigma == 0.005
        assert cfg.data.n_queries == 100000
        assert cfg.train.stage1_lr == 1e-4
        assert cfg.train.stage2_lr == 1e-6
        assert cfg.train.margin == 2.0
        assert cfg.train.boundary_radius == 0.08
        assert cfg.model.unet_depth == 4

    def test_nested_union_shape_roundtrip(self):
        spec = ShapeSpec.union(
            ShapeSpec.box(center=(0.3, 0.3, 0.3), half_extents=(0.1, 0.1, 0.1)),
            ShapeSpec.union(ShapeSpec.sphere(radius=0.1)),
        )
        back = shape_from_dict(shape_to_dict(spec))
        assert back == spec

    def test_saved_file_is_valid_sorted_json(self, tmp_path):
        path = str(tmp_path / "c.json")
        save_config(path, ExperimentConfig())
        raw = open(path).read()
        d = json.loads(raw)
        assert list(d) == sorted(d)
