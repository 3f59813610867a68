"""Parameter creation, naming, and GFCK checkpoint serialization.

Every symbol of the attention layer (position/query/value/weight MLPs, key
CNN, aggregation kernels) maps to exactly one named group; names are stable
so checkpoints roundtrip bit-exactly.
"""

import json
import struct

import numpy as np

from ..tensorcore import Tensor, get_default_dtype
from .config import ModelConfig

CKPT_MAGIC = b"GFCK"
CKPT_VERSION = 1


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True,
                  dtype=dtype)


def _linear_pair(rng, c_in, c_out, dtype):
    return (_uniform(rng, (c_in, c_out), c_in, dtype),
            _uniform(rng, (c_out,), c_in, dtype))


def init_params(cfg: ModelConfig):
    """Seeded parameter dict; count is a pure function of the config."""
    rng = np.random.default_rng(cfg.seed)
    dtype = np.float32 if cfg.precision == "f32" else np.float64
    c = cfg.channels
    h = cfg.decoder_hidden
    p = {}

    def mlp(prefix, c_in, c_hidden, c_out):
        p[f"{prefix}.0.W"], p[f"{prefix}.0.b"] = _linear_pair(rng, c_in, c_hidden, dtype)
        p[f"{prefix}.1.W"], p[f"{prefix}.1.b"] = _linear_pair(rng, c_hidden, c_out, dtype)

    mlp("phi_point", 3, c, c)

    n_layers = cfg.num_layers
    for i in range(n_layers):
        pre = f"layer{i}"
        mlp(f"{pre}.phi_pos", 3, c, c)
        mlp(f"{pre}.phi_q", c, c, c)
        mlp(f"{pre}.phi_v", c, c, c)
        w_out = c if cfg.attention == "vector" else 1
        mlp(f"{pre}.phi_w", c, c, w_out)
        p[f"{pre}.psi_k.kernel"] = _uniform(rng, (3, 3, 3, c, c), 27 * c, dtype)
        p[f"{pre}.psi_k.bias"] = _uniform(rng, (c,), 27 * c, dtype)
        if i >= n_layers - cfg.depthwise_last_k:
            p[f"{pre}.agg.kernel"] = _uniform(rng, (3, 3, 3, c), 27, dtype)
        else:
            p[f"{pre}.agg.kernel"] = _uniform(rng, (3, 3, 3, c, c), 27 * c, dtype)
        p[f"{pre}.agg.bias"] = _uniform(rng, (c,), 27 * c, dtype)

    proj_dim = 32
    for k in range(3):
        p[f"proj{k}.W"], p[f"proj{k}.b"] = _linear_pair(rng, c, proj_dim, dtype)

    f_dim = proj_dim * (3 if cfg.feature_combine == "concat" else 1)
    p["dec.fc_p.W"], p["dec.fc_p.b"] = _linear_pair(rng, 3, h, dtype)
    for j in range(cfg.decoder_blocks):
        pre = f"dec.block{j}"
        p[f"{pre}.fc_c.W"], p[f"{pre}.fc_c.b"] = _linear_pair(rng, f_dim, h, dtype)
        p[f"{pre}.fc0.W"], p[f"{pre}.fc0.b"] = _linear_pair(rng, h, h, dtype)
        p[f"{pre}.fc1.W"], p[f"{pre}.fc1.b"] = _linear_pair(rng, h, h, dtype)
    # zero-initialized head: the untrained field is exactly 0.5 everywhere
    p["dec.fc_out.W"] = Tensor(np.zeros((h, 1)), requires_grad=True, dtype=dtype)
    p["dec.fc_out.b"] = Tensor(np.zeros((1,)), requires_grad=True, dtype=dtype)
    return p


def zero_grads(params):
    for t in params.values():
        t.zero_grad()


def save_checkpoint(path, cfg, params):
    """GFCK binary: config JSON, then each named tensor as little-endian f64."""
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", CKPT_VERSION))
        cfg_bytes = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(cfg_bytes)))
        f.write(cfg_bytes)
        f.write(struct.pack("<I", len(params)))
        for name, t in params.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            arr = np.ascontiguousarray(t.data, dtype="<f8")
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Read a GFCK file back into (ModelConfig, params dict)."""
    with open(path, "rb") as f:
        if f.read(4) != CKPT_MAGIC:
            raise ValueError(f"{path}: not a GFCK checkpoint")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported GFCK version {version}")
        (clen,) = struct.unpack("<I", f.read(4))
        cfg = ModelConfig.from_dict(json.loads(f.read(clen).decode("utf-8")))
        dtype = np.float32 if cfg.precision == "f32" else np.float64
        (count,) = struct.unpack("<I", f.read(4))
        params = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape)
            params[name] = Tensor(data.copy(), requires_grad=True, dtype=dtype)
    return cfg, params
