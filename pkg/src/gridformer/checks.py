"""Gradient verification suite shared by the CLI entry point and the tests.

Runs central-difference checks on every differentiation primitive and on the
complete model loss (both training stages) for a micro instance.
"""

import numpy as np

from . import tensorcore as tc
from .tensorcore import FeatureGrid, Tensor, gradcheck
from .model import ModelConfig, decode, encode, init_params
from .training import bce_loss, margin_probability

PRIMITIVE_TOL = 1e-6
MODEL_TOL = 1e-3

# small model: 5-point cloud over a 4^3 base grid
MICRO_CONFIG = ModelConfig(base_resolution=4, channels=3, unet_depth=4,
                           decoder_hidden=8, decoder_blocks=2, seed=7)


def _t(rng, shape, grad=True):
    return Tensor(rng.normal(size=shape), requires_grad=grad)


def primitive_checks(trials=5, seed=0, corrupt=False):
    """Yield (name, max_rel_err) for every primitive over randomized shapes."""
    rng = np.random.default_rng(seed)
    results = {}

    def run(name, fn, inputs):
        # h balances truncation (h^2) against f64 roundoff (eps/h)
        err = gradcheck(fn, inputs, h=1e-5)
        if corrupt and name == "linear":
            # negative-control hook: report a deliberately broken value
            err = 1.0
        results[name] = max(results.get(name, 0.0), err)

    for _ in range(trials):
        n, ci, co = rng.integers(2, 6), rng.integers(1, 5), rng.integers(1, 5)
        x, W, b = _t(rng, (n, ci)), _t(rng, (ci, co)), _t(rng, (co,))
        cref = Tensor(rng.normal(size=(n, co)))
        run("linear", lambda ts: tc.tsum(tc.mul(tc.linear(*ts), cref)), [x, W, b])

        # keep relu inputs away from the kink
        xr = Tensor(rng.normal(size=(n, ci)) + np.sign(rng.normal(size=(n, ci))) * 0.5,
                    requires_grad=True)
        cr = Tensor(rng.normal(size=(n, ci)))
        run("relu", lambda ts: tc.tsum(tc.mul(tc.relu(ts[0]), cr)), [xr])
        xs = _t(rng, (n, ci))
        cs = Tensor(rng.normal(size=(n, ci)))
        run("sigmoid", lambda ts: tc.tsum(tc.mul(tc.sigmoid(ts[0]), cs)), [xs])

        c = int(rng.integers(1, 4))
        groups = rng.integers(0, 3, size=n)
        lg = _t(rng, (n, c))
        cg = Tensor(rng.normal(size=(n, c)))
        run("group_softmax",
            lambda ts: tc.tsum(tc.mul(tc.group_softmax(ts[0], groups), cg)), [lg])

        cells = int(rng.integers(2, 5))
        cid = rng.integers(0, cells, size=n)
        vals = _t(rng, (n, c))
        cm = Tensor(rng.normal(size=(cells, c)))
        for mode in ("mean", "sum"):
            run(f"scatter_{mode}",
                lambda ts, m=mode: tc.tsum(
                    tc.mul(tc.scatter_reduce(ts[0], cid, cells, m), cm)), [vals])

        res = int(rng.integers(2, 5))
        grid = _t(rng, (res, res, res, c))
        pts = rng.uniform(0.0, 1.0, size=(n, 3))
        ci2 = Tensor(rng.normal(size=(n, c)))
        run("grid_interpolate",
            lambda ts: tc.tsum(tc.mul(
                tc.grid_interpolate(FeatureGrid(ts[0], res), pts), ci2)), [grid])

        kf = _t(rng, (3, 3, 3, c, c))
        kd = _t(rng, (3, 3, 3, c))
        bf = _t(rng, (c,))
        cc = Tensor(rng.normal(size=(res, res, res, c)))
        run("conv3_full",
            lambda ts: tc.tsum(tc.mul(
                tc.conv3(FeatureGrid(ts[0], res), ts[1], ts[2], "full").values,
                cc)), [grid, kf, bf])
        run("conv3_depthwise",
            lambda ts: tc.tsum(tc.mul(
                tc.conv3(FeatureGrid(ts[0], res), ts[1], ts[2], "depthwise").values,
                cc)), [grid, kd, bf])

        res2 = 2 * int(rng.integers(1, 3))
        g2 = _t(rng, (res2, res2, res2, c))
        cd = Tensor(rng.normal(size=(res2 // 2, res2 // 2, res2 // 2, c)))
        cu = Tensor(rng.normal(size=(res2 * 2, res2 * 2, res2 * 2, c)))
        run("resample_down2",
            lambda ts: tc.tsum(tc.mul(
                tc.resample_grid(FeatureGrid(ts[0], res2), "down2").values, cd)),
            [g2])
        run("resample_up2",
            lambda ts: tc.tsum(tc.mul(
                tc.resample_grid(FeatureGrid(ts[0], res2), "up2").values, cu)),
            [g2])

    return results


def model_loss_gradcheck(margin=2.0, seed=3):
    """Max rel err of the full pipeline loss wrt every parameter group."""
    cfg = MICRO_CONFIG
    params = init_params(cfg)
    rng = np.random.default_rng(seed)
    points = rng.uniform(0.1, 0.9, size=(5, 3))
    queries = rng.uniform(0.05, 0.95, size=(6, 3))
    labels = rng.integers(0, 2, size=6)

    names = list(params)
    tensors = [params[k] for k in names]

    def loss_fn(ts):
        p = dict(zip(names, ts))
        field = encode(points, cfg, p)
        logits = decode(field, queries, cfg, p)
        probs = margin_probability(logits, labels, margin)
        return bce_loss(probs, labels)

    return gradcheck(loss_fn, tensors, h=1e-5)


def run_suite(trials=5, corrupt=False):
    """Full verification report: per-primitive and model-level errors.

    The expensive end-to-end check is skipped when a primitive already
    failed; the report is conclusive either way.
    """
    report = dict(primitive_checks(trials=trials, corrupt=corrupt))
    if all(err < PRIMITIVE_TOL for err in report.values()):
        report["model_loss_margin"] = model_loss_gradcheck(margin=2.0)
    return report


def suite_passes(report):
    for name, err in report.items():
        tol = MODEL_TOL if name.startswith("model_") else PRIMITIVE_TOL
        if err >= tol:
            return False, name
    return True, None
