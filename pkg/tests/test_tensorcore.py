"""Unit tests for the autodiff substrate: primitive forward semantics and
gradients against central differences, plus tape mechanics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridformer import tensorcore as tc
from gridformer.tensorcore import FeatureGrid, Tape, Tensor, gradcheck

H = 1e-5
TOL = 1e-6


def _t(rng, shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


class TestTape:
    def test_backward_accumulates_into_grad(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with Tape() as tape:
            y = tc.tsum(tc.mul(x, x))
            tape.backward(y)
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_shared_input_grads_sum(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        with Tape() as tape:
            y = tc.tsum(tc.add(x, x))
            tape.backward(y)
        np.testing.assert_allclose(x.grad, [2.0])

    def test_no_tape_records_nothing(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        y = tc.scale(x, 2.0)
        assert y.data[0] == 2.0
        assert x.grad is None

    def test_backward_requires_scalar(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with Tape() as tape:
            y = tc.mul(x, x)
            with pytest.raises(ValueError):
                tape.backward(y)


class TestForwardSemantics:
    def test_linear_matches_numpy(self):
        rng = np.random.default_rng(0)
        x, W, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5)), rng.normal(size=5)
        out = tc.linear(Tensor(x), Tensor(W), Tensor(b))
        np.testing.assert_allclose(out.data, x @ W + b, atol=1e-12)

    def test_sigmoid_stable_at_extremes(self):
        x = Tensor(np.array([-1000.0, 0.0, 1000.0]))
        out = tc.sigmoid(x).data
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-12)

    def test_group_softmax_normalizes_per_group_per_channel(self):
        rng = np.random.default_rng(1)
        logits = Tensor(rng.normal(size=(20, 4)))
        groups = rng.integers(0, 5, size=20)
        w = tc.group_softmax(logits, groups).data
        for g in np.unique(groups):
            np.testing.assert_allclose(w[groups == g].sum(axis=0), 1.0, atol=1e-12)

    def test_group_softmax_singleton_group_is_one(self):
        w = tc.group_softmax(Tensor(np.array([[5.0, -3.0]])), np.array([0]))
        np.testing.assert_allclose(w.data, 1.0)

    def test_scatter_mean_matches_loop(self):
        rng = np.random.default_rng(2)
        vals = rng.normal(size=(30, 3))
        cid = rng.integers(0, 7, size=30)
        out = tc.scatter_reduce(Tensor(vals), cid, 7, "mean").data
        for c in range(7):
            sel = cid == c
            expect = vals[sel].mean(axis=0) if sel.any() else 0.0
            np.testing.assert_allclose(out[c], expect, atol=1e-12)

    def test_scatter_rejects_out_of_range(self):
        with pytest.raises(IndexError):
            tc.scatter_reduce(Tensor(np.ones((2, 1))), np.array([0, 5]), 3, "sum")

    def test_interpolate_constant_field_exact(self):
        rng = np.random.default_rng(3)
        grid = FeatureGrid(Tensor(np.full((4, 4, 4, 2), 1.75)), 4)
        pts = rng.uniform(0, 1, size=(50, 3))
        out = tc.grid_interpolate(grid, pts).data
        np.testing.assert_allclose(out, 1.75, atol=1e-6)

    def test_interpolate_linear_ramp_interior(self):
        # grid storing f(c) = cell-center x-coordinate reproduces the ramp
        res = 8
        centers = (np.arange(res) + 0.5) / res
        vals = np.tile(centers[:, None, None, None], (1, res, res, 1))
        grid = FeatureGrid(Tensor(vals), res)
        rng = np.random.default_rng(4)
        pts = rng.uniform(0.5 / res, 1 - 0.5 / res, size=(100, 3))
        out = tc.grid_interpolate(grid, pts).data[:, 0]
        np.testing.assert_allclose(out, pts[:, 0], atol=1e-6)

    def test_interpolate_rejects_outside_domain(self):
        grid = FeatureGrid(Tensor(np.zeros((2, 2, 2, 1))), 2)
        with pytest.raises(ValueError):
            tc.grid_interpolate(grid, np.array([[0.5, 0.5, 1.5]]))

    def test_conv3_identity_kernel(self):
        rng = np.random.default_rng(5)
        c = 3
        vals = rng.normal(size=(4, 4, 4, c))
        kern = np.zeros((3, 3, 3, c, c))
        kern[1, 1, 1] = np.eye(c)
        out = tc.conv3(FeatureGrid(Tensor(vals), 4), Tensor(kern)).values.data
        np.testing.assert_allclose(out, vals, atol=1e-12)

    def test_conv3_zero_padding(self):
        # all-ones kernel on all-ones single-channel grid counts neighbors
        vals = np.ones((3, 3, 3, 1))
        kern = np.ones((3, 3, 3, 1))
        out = tc.conv3(FeatureGrid(Tensor(vals), 3), Tensor(kern),
                       mode="depthwise").values.data
        assert out[1, 1, 1, 0] == pytest.approx(27.0)
        assert out[0, 0, 0, 0] == pytest.approx(8.0)

    def test_resample_down_up_shapes(self):
        g = FeatureGrid(Tensor(np.arange(4 ** 3 * 2, dtype=float).reshape(4, 4, 4, 2)), 4)
        down = tc.resample_grid(g, "down2")
        up = tc.resample_grid(g, "up2")
        assert down.res == 2 and down.values.data.shape == (2, 2, 2, 2)
        assert up.res == 8 and up.values.data.shape == (8, 8, 8, 2)
        # down2 is the 2x2x2 block mean
        np.testing.assert_allclose(
            down.values.data[0, 0, 0], g.values.data[:2, :2, :2].mean(axis=(0, 1, 2))
        )
        # up2 repeats values
        np.testing.assert_allclose(up.values.data[0, 0, 0], g.values.data[0, 0, 0])
        np.testing.assert_allclose(up.values.data[1, 1, 1], g.values.data[0, 0, 0])

    def test_down2_requires_even_resolution(self):
        g = FeatureGrid(Tensor(np.zeros((3, 3, 3, 1))), 3)
        with pytest.raises(ValueError):
            tc.resample_grid(g, "down2")


class TestGradients:
    """Every primitive against central differences."""

    def test_elementwise_and_reductions(self):
        rng = np.random.default_rng(10)
        a, b = _t(rng, (4, 3)), _t(rng, (4, 3))
        c = Tensor(rng.normal(size=(4, 3)))
        assert gradcheck(lambda ts: tc.tsum(tc.mul(tc.add(*ts), c)), [a, b], h=H) < TOL
        assert gradcheck(lambda ts: tc.tsum(tc.mul(tc.sub(*ts), c)), [a, b], h=H) < TOL
        assert gradcheck(lambda ts: tc.tsum(tc.mul(*ts)), [a, b], h=H) < TOL
        assert gradcheck(lambda ts: tc.tmean(tc.mul(tc.scale(ts[0], 1.7), c)), [a], h=H) < TOL

    def test_log_and_clamp(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.uniform(0.5, 2.0, size=(5, 2)), requires_grad=True)
        c = Tensor(rng.normal(size=(5, 2)))
        assert gradcheck(lambda ts: tc.tsum(tc.mul(tc.log(ts[0]), c)), [x], h=H) < TOL
        # clamp gradient passes through strictly interior values only
        y = Tensor(np.array([0.2, 0.5, 0.8]), requires_grad=True)
        with Tape() as tape:
            out = tc.tsum(tc.clamp(y, 0.3, 0.7))
            tape.backward(out)
        np.testing.assert_allclose(y.grad, [0.0, 1.0, 0.0])

    def test_linear_relu_sigmoid(self):
        rng = np.random.default_rng(12)
        x, W, b = _t(rng, (4, 3)), _t(rng, (3, 2)), _t(rng, (2,))
        c = Tensor(rng.normal(size=(4, 2)))
        assert gradcheck(lambda ts: tc.tsum(tc.mul(tc.linear(*ts), c)), [x, W, b], h=H) < TOL
        assert gradcheck(
            lambda ts: tc.tsum(tc.mul(tc.sigmoid(tc.linear(*ts)), c)), [x, W, b], h=H
        ) < TOL

    def test_group_softmax_grad(self):
        rng = np.random.default_rng(13)
        logits = _t(rng, (12, 3))
        groups = rng.integers(0, 4, size=12)
        c = Tensor(rng.normal(size=(12, 3)))
        assert gradcheck(
            lambda ts: tc.tsum(tc.mul(tc.group_softmax(ts[0], groups), c)),
            [logits], h=H) < TOL

    def test_scatter_gather_grad(self):
        rng = np.random.default_rng(14)
        vals = _t(rng, (15, 2))
        cid = rng.integers(0, 5, size=15)
        c = Tensor(rng.normal(size=(5, 2)))
        for mode in ("sum", "mean"):
            assert gradcheck(
                lambda ts, m=mode: tc.tsum(tc.mul(tc.scatter_reduce(ts[0], cid, 5, m), c)),
                [vals], h=H) < TOL
        x = _t(rng, (6, 2))
        idx = rng.integers(0, 6, size=10)
        cg = Tensor(rng.normal(size=(10, 2)))
        assert gradcheck(
            lambda ts: tc.tsum(tc.mul(tc.gather_rows(ts[0], idx), cg)), [x], h=H) < TOL

    def test_interpolate_grad(self):
        rng = np.random.default_rng(15)
        grid = _t(rng, (3, 3, 3, 2))
        pts = rng.uniform(0, 1, size=(8, 3))
        c = Tensor(rng.normal(size=(8, 2)))
        assert gradcheck(
            lambda ts: tc.tsum(tc.mul(
                tc.grid_interpolate(FeatureGrid(ts[0], 3), pts), c)),
            [grid], h=H) < TOL

    def test_conv3_grads(self):
        rng = np.random.default_rng(16)
        c = 2
        grid = _t(rng, (3, 3, 3, c))
        kf, kd, b = _t(rng, (3, 3, 3, c, c)), _t(rng, (3, 3, 3, c)), _t(rng, (c,))
        cc = Tensor(rng.normal(size=(3, 3, 3, c)))
        assert gradcheck(
            lambda ts: tc.tsum(tc.mul(
                tc.conv3(FeatureGrid(ts[0], 3), ts[1], ts[2], "full").values, cc)),
            [grid, kf, b], h=H) < TOL
        assert gradcheck(
            lambda ts: tc.tsum(tc.mul(
                tc.conv3(FeatureGrid(ts[0], 3), ts[1], ts[2], "depthwise").values, cc)),
            [grid, kd, b], h=H) < TOL

    def test_resample_grads(self):
        rng = np.random.default_rng(17)
        g = _t(rng, (4, 4, 4, 2))
        cd = Tensor(rng.normal(size=(2, 2, 2, 2)))
        cu = Tensor(rng.normal(size=(8, 8, 8, 2)))
        assert gradcheck(
            lambda ts: tc.tsum(tc.mul(
                tc.resample_grid(FeatureGrid(ts[0], 4), "down2").values, cd)),
            [g], h=H) < TOL
        assert gradcheck(
            lambda ts: tc.tsum(tc.mul(
                tc.resample_grid(FeatureGrid(ts[0], 4), "up2").values, cu)),
            [g], h=H) < TOL

    def test_reshape_hstack_grads(self):
        rng = np.random.default_rng(18)
        a, b = _t(rng, (4, 2)), _t(rng, (4, 3))
        c = Tensor(rng.normal(size=(4, 5)))
        assert gradcheck(
            lambda ts: tc.tsum(tc.mul(tc.hstack(ts), c)), [a, b], h=H) < TOL
        cr = Tensor(rng.normal(size=(8,)))
        assert gradcheck(
            lambda ts: tc.tsum(tc.mul(tc.reshape(ts[0], (8,)), cr)), [a], h=H) < TOL


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(1, 4), st.integers(1, 6),
       st.integers(0, 2 ** 31 - 1))
def test_group_softmax_sums_to_one_property(n, c, k, seed):
    rng = np.random.default_rng(seed)
    logits = Tensor(rng.normal(scale=5.0, size=(n, c)))
    groups = rng.integers(0, k, size=n)
    w = tc.group_softmax(logits, groups).data
    for g in np.unique(groups):
        np.testing.assert_allclose(w[groups == g].sum(axis=0), 1.0, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
def test_interpolate_convex_combination_property(res, c, seed):
    # interpolated values stay inside the grid's value range
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=(res, res, res, c))
    pts = rng.uniform(0, 1, size=(20, 3))
    out = tc.grid_interpolate(FeatureGrid(Tensor(vals), res), pts).data
    assert out.min() >= vals.min() - 1e-12
    assert out.max() <= vals.max() + 1e-12
