"""Differentiable primitives: dense linear algebra, per-cell softmax,
scatter/gather between points and grids, 3D convolutions and resampling.

Every backward accumulates with ``np.add`` / ``np.add.at`` in ascending row
order, keeping results bitwise deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor, record_op


@dataclass
class FeatureGrid:
    """Dense C-channel cubic feature lattice; values shaped (res, res, res, C)."""

    values: Tensor
    res: int

    def __post_init__(self):
        if self.values.shape[:3] != (self.res, self.res, self.res):
            raise ValueError(
                f"grid values {self.values.shape} inconsistent with res {self.res}"
            )

    @property
    def channels(self):
        return self.values.shape[3]


# ---------------------------------------------------------------------------
# elementwise / dense


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return record_op([a, b], out, backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data - b.data, dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    return record_op([a, b], out, backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data, dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    return record_op([a, b], out, backward)


def scale(a, s):
    a = as_tensor(a)
    s = float(s)
    out = Tensor(a.data * s, dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * s)

    return record_op([a], out, backward)


def tsum(a):
    a = as_tensor(a)
    out = Tensor(a.data.sum(), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g, a.shape).copy())

    return record_op([a], out, backward)


def tmean(a):
    return scale(tsum(a), 1.0 / max(a.size, 1))


def log(a):
    a = as_tensor(a)
    out = Tensor(np.log(a.data), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g / a.data)

    return record_op([a], out, backward)


def clamp(a, lo, hi):
    """Clamp values; gradient passes through only where unclamped."""
    a = as_tensor(a)
    out = Tensor(np.clip(a.data, lo, hi), dtype=a.data.dtype)
    passthrough = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * passthrough)

    return record_op([a], out, backward)


def linear(x, W, b):
    """y = x @ W + b for x (N, Cin), W (Cin, Cout), b (Cout,)."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.data.ndim != 2 or W.data.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ValueError(f"linear shape mismatch: x {x.shape} vs W {W.shape}")
    if b.shape != (W.shape[1],):
        raise ValueError(f"linear bias shape {b.shape} vs W {W.shape}")
    out = Tensor(x.data @ W.data + b.data, dtype=x.data.dtype)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g @ W.data.T)
        if W.requires_grad:
            W.accumulate_grad(x.data.T @ g)
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))

    return record_op([x, W, b], out, backward)


def relu(x):
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0), dtype=x.data.dtype)
    mask = x.data > 0.0

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * mask)

    return record_op([x], out, backward)


def _stable_sigmoid(t):
    # branch on sign so exp never overflows
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x):
    x = as_tensor(x)
    y = _stable_sigmoid(np.asarray(x.data, dtype=x.data.dtype))
    out = Tensor(y, dtype=x.data.dtype)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * y * (1.0 - y))

    return record_op([x], out, backward)


def pointwise(x, kind):
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown pointwise kind {kind!r}")


def reshape(a, shape):
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), dtype=a.data.dtype)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.shape))

    return record_op([a], out, backward)


def hstack(tensors):
    """Concatenate 2D tensors along columns."""
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1))
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=1)
        for t, gp in zip(tensors, parts):
            if t.requires_grad:
                t.accumulate_grad(gp)

    return record_op(tensors, out, backward)


# ---------------------------------------------------------------------------
# point <-> grid


def _segments(group_id, n_groups_hint=None):
    """Stable sort rows by group; returns (order, starts) of the segments."""
    order = np.argsort(group_id, kind="stable")
    sorted_ids = group_id[order]
    starts = np.flatnonzero(np.concatenate(([True], sorted_ids[1:] != sorted_ids[:-1])))
    return order, starts


def group_softmax(logits, group_id):
    """Softmax per channel across rows sharing a group id.

    Rows within a group sum to 1 per channel; a singleton group maps to ones.
    """
    logits = as_tensor(logits)
    group_id = np.asarray(group_id, dtype=np.int64)
    n = logits.shape[0]
    if group_id.shape != (n,):
        raise ValueError(f"group_id shape {group_id.shape} vs logits {logits.shape}")
    if n == 0:
        out = Tensor(np.zeros_like(logits.data))

        def backward_empty(g):
            if logits.requires_grad:
                logits.accumulate_grad(np.zeros_like(logits.data))

        return record_op([logits], out, backward_empty)

    order, starts = _segments(group_id)
    inv = np.empty(n, dtype=np.int64)
    inv[order] = np.arange(n)

    z = logits.data[order]
    zmax = np.maximum.reduceat(z, starts, axis=0)
    seg_len = np.diff(np.append(starts, n))
    zmax_full = np.repeat(zmax, seg_len, axis=0)
    e = np.exp(z - zmax_full)
    denom = np.add.reduceat(e, starts, axis=0)
    y_sorted = e / np.repeat(denom, seg_len, axis=0)
    y = y_sorted[inv]
    out = Tensor(y, dtype=logits.data.dtype)

    def backward(g):
        if not logits.requires_grad:
            return
        gs = g[order]
        dot = np.add.reduceat(gs * y_sorted, starts, axis=0)
        dz_sorted = y_sorted * (gs - np.repeat(dot, seg_len, axis=0))
        logits.accumulate_grad(dz_sorted[inv])

    return record_op([logits], out, backward)


def scatter_reduce(values, cell_id, num_cells, mode="mean"):
    """Reduce point rows into their cells; empty cells are zero.

    Accumulation runs in ascending point index (np.add.at is sequential).
    """
    values = as_tensor(values)
    cell_id = np.asarray(cell_id, dtype=np.int64)
    if mode not in ("mean", "sum"):
        raise ValueError(f"unknown scatter mode {mode!r}")
    if cell_id.size and (cell_id.min() < 0 or cell_id.max() >= num_cells):
        raise IndexError(
            f"cell_id out of range [0, {num_cells}): "
            f"min {cell_id.min()}, max {cell_id.max()}"
        )
    c = values.shape[1]
    acc = np.zeros((num_cells, c), dtype=values.data.dtype)
    np.add.at(acc, cell_id, values.data)
    if mode == "mean":
        counts = np.bincount(cell_id, minlength=num_cells).astype(values.data.dtype)
        denom = np.maximum(counts, 1.0)[:, None]
        acc = acc / denom
    out = Tensor(acc, dtype=values.data.dtype)

    def backward(g):
        if not values.requires_grad:
            return
        if mode == "mean":
            values.accumulate_grad((g / denom)[cell_id])
        else:
            values.accumulate_grad(g[cell_id])

    return record_op([values], out, backward)


def gather_rows(x, idx):
    """Rows of x selected by integer index; backward scatter-adds."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.data[idx], dtype=x.data.dtype)

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            x.accumulate_grad(gx)

    return record_op([x], out, backward)


# ---------------------------------------------------------------------------
# grids


def _interp_weights(points, res):
    """Cell-center trilinear corner indices and weights for points in [0,1]^3."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"points must be (M, 3), got {p.shape}")
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("interpolation point outside [0, 1]^3")
    # features sit at cell centers (i + 0.5) / res; clamp to the center lattice
    u = np.clip(p * res - 0.5, 0.0, res - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), res - 2) if res > 1 else np.zeros_like(u, dtype=np.int64)
    w = u - i0
    return i0, w


def grid_interpolate(grid, points):
    """Trilinear sample of grid features at points in [0,1]^3.

    Differentiable in the grid values only; blend weights are fixed geometry.
    """
    g = grid.values
    res = grid.res
    i0, w = _interp_weights(points, res)
    m = i0.shape[0]
    c = grid.channels
    flat = g.data.reshape(res * res * res, c)
    out_data = np.zeros((m, c), dtype=g.data.dtype)
    corners = []
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                # upper corner clamps at res-1 (degenerate only when res == 1)
                ix = np.minimum(i0[:, 0] + dx, res - 1)
                iy = np.minimum(i0[:, 1] + dy, res - 1)
                iz = np.minimum(i0[:, 2] + dz, res - 1)
                wx = w[:, 0] if dx else 1.0 - w[:, 0]
                wy = w[:, 1] if dy else 1.0 - w[:, 1]
                wz = w[:, 2] if dz else 1.0 - w[:, 2]
                wt = (wx * wy * wz).astype(g.data.dtype)
                fi = (ix * res + iy) * res + iz
                corners.append((fi, wt))
                out_data += wt[:, None] * flat[fi]
    out = Tensor(out_data, dtype=g.data.dtype)

    def backward(gr):
        if not g.requires_grad:
            return
        acc = np.zeros_like(flat)
        for fi, wt in corners:
            np.add.at(acc, fi, wt[:, None] * gr)
        g.accumulate_grad(acc.reshape(g.shape))

    return record_op([g], out, backward)


_OFFSETS3 = [(dx, dy, dz) for dx in range(3) for dy in range(3) for dz in range(3)]


def conv3(grid, kernel, bias=None, mode="full"):
    """3x3x3 convolution over a cubic grid, zero padded to keep resolution.

    full: kernel (3,3,3,Cin,Cout) mixes channels. depthwise: kernel (3,3,3,C),
    one spatial kernel per channel, no mixing.
    """
    g = grid.values
    kernel = as_tensor(kernel)
    res, c_in = grid.res, grid.channels
    if mode == "full":
        if kernel.shape[:4] != (3, 3, 3, c_in):
            raise ValueError(
                f"full conv kernel {kernel.shape} vs grid channels {c_in}"
            )
        c_out = kernel.shape[4]
    elif mode == "depthwise":
        if kernel.shape != (3, 3, 3, c_in):
            raise ValueError(
                f"depthwise kernel {kernel.shape} vs grid channels {c_in}"
            )
        c_out = c_in
    else:
        raise ValueError(f"unknown conv mode {mode!r}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ValueError(f"conv bias shape {bias.shape}, expected ({c_out},)")

    pad = np.zeros((res + 2, res + 2, res + 2, c_in), dtype=g.data.dtype)
    pad[1:-1, 1:-1, 1:-1] = g.data
    v = res * res * res

    def slab(dx, dy, dz):
        # fresh contiguous copy per use; keeps only `pad` alive on the tape
        return np.ascontiguousarray(
            pad[dx:dx + res, dy:dy + res, dz:dz + res]
        ).reshape(v, c_in)

    out_data = np.zeros((v, c_out), dtype=g.data.dtype)
    for dx, dy, dz in _OFFSETS3:
        if mode == "full":
            out_data += slab(dx, dy, dz) @ kernel.data[dx, dy, dz]
        else:
            out_data += slab(dx, dy, dz) * kernel.data[dx, dy, dz]
    if bias is not None:
        out_data += bias.data
    out = Tensor(out_data.reshape(res, res, res, c_out), dtype=g.data.dtype)

    inputs = [g, kernel] + ([bias] if bias is not None else [])

    def backward(gr):
        gf = gr.reshape(v, c_out)
        if g.requires_grad:
            gpad = np.zeros_like(pad)
            for dx, dy, dz in _OFFSETS3:
                if mode == "full":
                    contrib = gf @ kernel.data[dx, dy, dz].T
                else:
                    contrib = gf * kernel.data[dx, dy, dz]
                gpad[dx:dx + res, dy:dy + res, dz:dz + res] += contrib.reshape(
                    res, res, res, c_in
                )
            g.accumulate_grad(gpad[1:-1, 1:-1, 1:-1])
        if kernel.requires_grad:
            gk = np.zeros_like(kernel.data)
            for dx, dy, dz in _OFFSETS3:
                if mode == "full":
                    gk[dx, dy, dz] = slab(dx, dy, dz).T @ gf
                else:
                    gk[dx, dy, dz] = (slab(dx, dy, dz) * gf).sum(axis=0)
            kernel.accumulate_grad(gk)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(gf.sum(axis=0))

    result = record_op(inputs, out, backward)
    return FeatureGrid(result, res)


def resample_grid(grid, factor):
    """down2 = 2x2x2 average pooling; up2 = nearest-neighbor repetition."""
    g = grid.values
    res, c = grid.res, grid.channels
    if factor == "down2":
        if res % 2 != 0:
            raise ValueError(f"down2 needs even resolution, got {res}")
        r2 = res // 2
        out_data = g.data.reshape(r2, 2, r2, 2, r2, 2, c).mean(axis=(1, 3, 5))
        out = Tensor(out_data, dtype=g.data.dtype)

        def backward(gr):
            if g.requires_grad:
                up = np.repeat(np.repeat(np.repeat(gr, 2, 0), 2, 1), 2, 2) / 8.0
                g.accumulate_grad(up)

        return FeatureGrid(record_op([g], out, backward), r2)
    if factor == "up2":
        r2 = res * 2
        out_data = np.repeat(np.repeat(np.repeat(g.data, 2, 0), 2, 1), 2, 2)
        out = Tensor(out_data, dtype=g.data.dtype)

        def backward(gr):
            if g.requires_grad:
                g.accumulate_grad(
                    gr.reshape(res, 2, res, 2, res, 2, c).sum(axis=(1, 3, 5))
                )

        return FeatureGrid(record_op([g], out, backward), r2)
    raise ValueError(f"unknown resample factor {factor!r}")
