"""The point-grid attention network: a depth-4 U-Net over volume feature
grids driven by per-point attention, plus the multi-resolution occupancy
decoder.

All forward paths are built from tensorcore primitives so one backward pass
over the tape yields gradients for every parameter group.
"""

from dataclasses import dataclass

import numpy as np

from .. import tensorcore as tc
from ..tensorcore import FeatureGrid, Tensor
from .config import ModelConfig


@dataclass
class EncodedField:
    """Three feature grids (two distinct resolutions when downsampling)."""

    grids: list

    def __post_init__(self):
        if len(self.grids) != 3:
            raise ValueError(f"expected exactly 3 grids, got {len(self.grids)}")

    @property
    def resolutions(self):
        return [g.res for g in self.grids]


def localize(p, res):
    """Offset of each point inside its grid cell: p - floor(p*res)/res."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("point outside [0, 1]^3")
    return p - np.floor(p * res) / res


def cell_index(p, res):
    """Flattened cell id per point; a coordinate of exactly 1.0 folds into
    the last cell."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    idx = np.minimum(np.floor(p * res).astype(np.int64), res - 1)
    return (idx[:, 0] * res + idx[:, 1]) * res + idx[:, 2]


def _mlp(x, params, prefix):
    """Two linear layers with one ReLU."""
    h = tc.linear(x, params[f"{prefix}.0.W"], params[f"{prefix}.0.b"])
    h = tc.relu(h)
    return tc.linear(h, params[f"{prefix}.1.W"], params[f"{prefix}.1.b"])


def position_encoding(local, params, prefix):
    """MLP embedding of the in-cell offset (recomputed per layer/level)."""
    return _mlp(tc.as_tensor(local), params, prefix)


def _broadcast_scalar_weights(w, channels):
    # (N,1) -> (N,C) via a constant all-ones map; backward row-sums
    ones = Tensor(np.ones((1, channels)), dtype=w.data.dtype)
    zero = Tensor(np.zeros((channels,)), dtype=w.data.dtype)
    return tc.linear(w, ones, zero)


# when set to a list, every layer appends (cell_id, attention_weights);
# used by verification tests to audit normalization on the live model
ATTENTION_PROBE = None


def transformer_layer(coords, f_p, grid, params, layer_idx, cfg, depthwise):
    """One point-grid transformer layer at the grid's resolution.

    Attention scatters point values into their cells with learned per-channel
    weights; a 3^3 convolution aggregates neighbor grids; points resample the
    hybrid grid. Skip connections carry both point and grid features (cells
    without points keep their incoming feature).
    """
    pre = f"layer{layer_idx}"
    res = grid.res
    c = grid.channels
    cid = cell_index(coords, res)
    f_pos = position_encoding(localize(coords, res), params, f"{pre}.phi_pos")

    keys = tc.conv3(grid, params[f"{pre}.psi_k.kernel"],
                    params[f"{pre}.psi_k.bias"], mode="full")
    k_j = tc.gather_rows(tc.reshape(keys.values, (res ** 3, c)), cid)

    q_j = _mlp(f_p, params, f"{pre}.phi_q")
    logits = _mlp(tc.add(tc.sub(k_j, q_j), f_pos), params, f"{pre}.phi_w")
    weights = tc.group_softmax(logits, cid)
    if cfg.attention == "scalar":
        weights = _broadcast_scalar_weights(weights, c)
    if ATTENTION_PROBE is not None:
        ATTENTION_PROBE.append((cid.copy(), weights.data.copy()))

    values = _mlp(f_p, params, f"{pre}.phi_v")
    contrib = tc.mul(weights, tc.add(values, f_pos))
    agg = tc.scatter_reduce(contrib, cid, res ** 3, mode="sum")
    grid_vals = tc.add(grid.values, tc.reshape(agg, grid.values.shape))

    mid = FeatureGrid(grid_vals, res)
    conv = tc.conv3(mid, params[f"{pre}.agg.kernel"], params[f"{pre}.agg.bias"],
                    mode="depthwise" if depthwise else "full")
    out_grid = FeatureGrid(tc.add(grid_vals, conv.values), res)

    # point features sampling: no position encoding here, value MLP shared
    sampled = tc.grid_interpolate(out_grid, coords)
    new_f_p = tc.add(tc.add(values, sampled), f_p)
    return new_f_p, out_grid


def encode(coords, cfg: ModelConfig, params):
    """Point cloud -> EncodedField (f1 full res, f2 full res, f3 half res)."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    if len(coords) < 1:
        raise ValueError("empty point cloud")
    if coords.min() < 0.0 or coords.max() > 1.0:
        raise ValueError("point cloud outside [0, 1]^3")
    # canonical ordering: accumulation order is then independent of the
    # caller's point permutation, making encode bitwise reproducible
    coords = coords[np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0]))]

    depth = cfg.unet_depth
    level_res = cfg.level_resolutions()
    n_layers = cfg.num_layers

    f_p = _mlp(tc.as_tensor(coords), params, "phi_point")
    cid0 = cell_index(coords, level_res[0])
    init = tc.scatter_reduce(f_p, cid0, level_res[0] ** 3, mode="mean")
    grid = FeatureGrid(
        tc.reshape(init, (level_res[0], level_res[0], level_res[0], cfg.channels)),
        level_res[0],
    )

    enc_grids = []
    layer_idx = 0
    for lvl in range(depth):
        if lvl > 0 and level_res[lvl] != level_res[lvl - 1]:
            grid = tc.resample_grid(grid, "down2")
        dw = layer_idx >= n_layers - cfg.depthwise_last_k
        f_p, grid = transformer_layer(coords, f_p, grid, params, layer_idx, cfg, dw)
        enc_grids.append(grid)
        layer_idx += 1

    dec_grids = []
    grid = enc_grids[-1]
    for lvl in range(depth - 2, -1, -1):
        if level_res[lvl] != grid.res:
            grid = tc.resample_grid(grid, "up2")
        grid = FeatureGrid(tc.add(grid.values, enc_grids[lvl].values), grid.res)
        dw = layer_idx >= n_layers - cfg.depthwise_last_k
        f_p, grid = transformer_layer(coords, f_p, grid, params, layer_idx, cfg, dw)
        dec_grids.append(grid)
        layer_idx += 1

    # f1 = final full-resolution grid, f2 = previous decoder grid (full res),
    # f3 = decoder grid one level down
    f1, f2, f3 = dec_grids[-1], dec_grids[-2], dec_grids[-3]
    return EncodedField([f1, f2, f3])


def decode(field: EncodedField, q, cfg: ModelConfig, params):
    """Occupancy logits for query points q (M, 3) in [0,1]^3."""
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    if q.size and (q.min() < 0.0 or q.max() > 1.0):
        raise ValueError("query outside [0, 1]^3")

    projected = []
    for k, grid in enumerate(field.grids):
        feat = tc.grid_interpolate(grid, q)
        projected.append(tc.linear(feat, params[f"proj{k}.W"], params[f"proj{k}.b"]))
    if cfg.feature_combine == "concat":
        f_q = tc.hstack(projected)
    else:
        f_q = tc.add(tc.add(projected[0], projected[1]), projected[2])

    net = tc.linear(tc.as_tensor(q), params["dec.fc_p.W"], params["dec.fc_p.b"])
    for j in range(cfg.decoder_blocks):
        pre = f"dec.block{j}"
        net = tc.add(net, tc.linear(f_q, params[f"{pre}.fc_c.W"], params[f"{pre}.fc_c.b"]))
        h = tc.relu(net)
        h = tc.linear(h, params[f"{pre}.fc0.W"], params[f"{pre}.fc0.b"])
        h = tc.relu(h)
        h = tc.linear(h, params[f"{pre}.fc1.W"], params[f"{pre}.fc1.b"])
        net = tc.add(net, h)
    logits = tc.linear(tc.relu(net), params["dec.fc_out.W"], params["dec.fc_out.b"])
    return tc.reshape(logits, (len(q),))


def occupancy_probability(logits):
    """Stable sigmoid of the decoder output."""
    return tc.sigmoid(logits)
