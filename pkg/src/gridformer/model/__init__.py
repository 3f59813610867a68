from .config import ModelConfig
from .params import init_params, load_checkpoint, save_checkpoint, zero_grads
from .network import (
    EncodedField,
    cell_index,
    decode,
    encode,
    localize,
    occupancy_probability,
    position_encoding,
    transformer_layer,
)

__all__ = [
    "ModelConfig", "init_params", "load_checkpoint", "save_checkpoint",
    "zero_grads", "EncodedField", "cell_index", "decode", "encode",
    "localize", "occupancy_probability", "position_encoding",
    "transformer_layer",
]
