"""Metrics against brute-force oracles and identity cases."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridformer.fields import ShapeSpec, signed_distance
from gridformer.meshing import ScalarGrid, marching_cubes
from gridformer.metrics import (MetricsReport, chamfer_and_fscore,
                                evaluate_reconstruction, normal_consistency,
                                sample_mesh_points, volumetric_iou)

SPHERE = ShapeSpec.sphere(center=(0.5, 0.5, 0.5), radius=0.3)


def _sphere_mesh(res=48):
    ax = np.arange(res + 1) / res
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
    vals = (0.5 - signed_distance(SPHERE, pts)).reshape((res + 1,) * 3)
    return marching_cubes(ScalarGrid(vals, res), tau=0.5)


def _brute_chamfer(a, b, threshold):
    d = np.linalg.norm(a[:, None] - b[None, :], axis=2)
    d_ab, d_ba = d.min(axis=1), d.min(axis=0)
    cd1 = 0.5 * (d_ab.mean() + d_ba.mean())
    cd2 = 0.5 * ((d_ab ** 2).mean() + (d_ba ** 2).mean())
    p, r = (d_ab <= threshold).mean(), (d_ba <= threshold).mean()
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return cd1, cd2, f


class TestVolumetricIoU:
    def test_oracle_counts(self):
        pred = np.array([1, 1, 0, 0, 1])
        gt = np.array([1, 0, 0, 1, 1])
        assert volumetric_iou(pred, gt) == pytest.approx(2 / 4)

    def test_identical_is_one(self):
        x = np.random.default_rng(0).integers(0, 2, 100)
        assert volumetric_iou(x, x) == 1.0

    def test_disjoint_is_zero(self):
        assert volumetric_iou(np.array([1, 0]), np.array([0, 1])) == 0.0

    def test_both_empty_is_one(self):
        assert volumetric_iou(np.zeros(5), np.zeros(5)) == 1.0

    def test_rejects_mismatched_shapes(self):
        with pytest.raises(ValueError):
            volumetric_iou(np.zeros(3), np.zeros(4))


class TestChamferFscore:
    def test_brute_force_oracle_100_points(self):
        rng = np.random.default_rng(0)
        a, b = rng.uniform(0, 1, (100, 3)), rng.uniform(0, 1, (100, 3))
        cd1, cd2, f = chamfer_and_fscore(a, b, threshold=0.1)
        e1, e2, ef = _brute_chamfer(a, b, 0.1)
        assert abs(cd1 - e1) <= 1e-12
        assert abs(cd2 - e2) <= 1e-12
        assert abs(f - ef) <= 1e-12

    def test_identical_sets_zero_distance_full_fscore(self):
        a = np.random.default_rng(1).uniform(0, 1, (50, 3))
        cd1, cd2, f = chamfer_and_fscore(a, a.copy(), threshold=0.01)
        assert cd1 == 0.0 and cd2 == 0.0 and f == 1.0

    def test_known_translation(self):
        # b = a shifted by 0.2 along x on a sparse set: NN distance is 0.2
        a = np.array([[0.1, 0.5, 0.5], [0.9, 0.5, 0.5]])
        b = a + np.array([0.0, 0.2, 0.0])
        cd1, cd2, f = chamfer_and_fscore(a, b, threshold=0.01)
        assert cd1 == pytest.approx(0.2, abs=1e-12)
        assert cd2 == pytest.approx(0.04, abs=1e-12)
        assert f == 0.0

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            chamfer_and_fscore(np.zeros((0, 3)), np.ones((2, 3)))


class TestNormalConsistency:
    def test_identical_is_one(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(0, 1, (40, 3))
        nrm = rng.normal(size=(40, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        assert normal_consistency(pts, nrm, pts, nrm) == pytest.approx(1.0)

    def test_flipped_normals_still_one(self):
        # absolute cosine: orientation-insensitive
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 1, (40, 3))
        nrm = rng.normal(size=(40, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        assert normal_consistency(pts, nrm, pts, -nrm) == pytest.approx(1.0)

    def test_orthogonal_is_zero(self):
        pts = np.array([[0.5, 0.5, 0.5]])
        a = np.array([[1.0, 0.0, 0.0]])
        b = np.array([[0.0, 1.0, 0.0]])
        assert normal_consistency(pts, a, pts, b) == pytest.approx(0.0)

    def test_rejects_non_unit(self):
        pts = np.array([[0.5, 0.5, 0.5]])
        with pytest.raises(ValueError):
            normal_consistency(pts, np.array([[2.0, 0, 0]]), pts,
                               np.array([[1.0, 0, 0]]))


class TestSampleMeshPoints:
    def test_points_on_triangles(self):
        mesh = _sphere_mesh(16)
        pts, nrm = sample_mesh_points(mesh, 500, seed=0)
        # sampled points lie near the sphere (mesh approximates it)
        d = np.abs(signed_distance(SPHERE, pts))
        assert d.max() < np.sqrt(3) / 16
        np.testing.assert_allclose(np.linalg.norm(nrm, axis=1), 1.0, atol=1e-9)

    def test_deterministic(self):
        mesh = _sphere_mesh(8)
        a, _ = sample_mesh_points(mesh, 100, seed=5)
        b, _ = sample_mesh_points(mesh, 100, seed=5)
        np.testing.assert_array_equal(a, b)


class TestEvaluateReconstruction:
    def test_oracle_mode_near_perfect(self):
        report = evaluate_reconstruction(_sphere_mesh(64), SPHERE,
                                         n_surface=20000, n_iou=5000, seed=0)
        assert report.iou == 1.0                    # analytic fallback
        assert report.chamfer_l1_x100 < 0.5
        assert report.normal_consistency > 0.98
        assert report.f_score_1pct > 0.99

    def test_report_text_roundtrip(self):
        report = MetricsReport(iou=0.9, chamfer_l1_x100=1.5,
                               chamfer_l2_x10000=2.5, normal_consistency=0.95,
                               f_score_1pct=0.8, n_surface_samples=100,
                               n_iou_queries=200, seed=3)
        back = MetricsReport.from_text(report.to_text())
        assert back == report

    def test_text_contains_all_metric_keys(self):
        report = MetricsReport(1, 0, 0, 1, 1, 10, 10, 0)
        text = report.to_text()
        for key in ("iou", "chamfer_l1_x100", "chamfer_l2_x10000",
                    "normal_consistency", "f_score_1pct"):
            assert key in text

    def test_scales_applied_once(self):
        mesh = _sphere_mesh(32)
        report = evaluate_reconstruction(mesh, SPHERE, n_surface=5000,
                                         n_iou=1000, seed=0)
        pred, _ = sample_mesh_points(mesh, 5000, seed=1)
        from gridformer.fields import sample_surface
        gt, _ = sample_surface(SPHERE, 5000, sigma=0.0, seed=0,
                               return_normals=True)
        cd1, cd2, _ = chamfer_and_fscore(pred, gt, 0.01)
        assert report.chamfer_l1_x100 == pytest.approx(cd1 * 100, rel=1e-12)
        assert report.chamfer_l2_x10000 == pytest.approx(cd2 * 10000, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 60), st.integers(2, 60), st.floats(0.01, 0.5),
       st.integers(0, 2 ** 31 - 1))
def test_chamfer_brute_force_property(na, nb, threshold, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 1, (na, 3)), rng.uniform(0, 1, (nb, 3))
    got = chamfer_and_fscore(a, b, threshold)
    expect = _brute_chamfer(a, b, threshold)
    np.testing.assert_allclose(got, expect, atol=1e-12)
