"""Network hyperparameters."""

from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class ModelConfig:
    base_resolution: int = 32
    channels: int = 32
    unet_depth: int = 4
    depthwise_last_k: int = 3
    enable_downsampling: bool = True
    decoder_hidden: int = 32
    decoder_blocks: int = 5
    attention: str = "vector"        # "vector" (per-channel weights) or "scalar"
    feature_combine: str = "sum"     # "sum" or "concat" of the projected grids
    precision: str = "f64"           # "f64" reference, "f32" training speed
    seed: int = 0

    def __post_init__(self):
        if self.channels <= 0:
            raise ValueError("channels must be > 0")
        if self.unet_depth < 4:
            raise ValueError("unet_depth must be >= 4 (three decoder grids)")
        if self.enable_downsampling:
            div = 2 ** (self.unet_depth - 2)
            if self.base_resolution % div != 0:
                raise ValueError(
                    f"base_resolution {self.base_resolution} must be divisible "
                    f"by {div} for unet_depth {self.unet_depth}"
                )
        if self.attention not in ("vector", "scalar"):
            raise ValueError(f"unknown attention mode {self.attention!r}")
        if self.feature_combine not in ("sum", "concat"):
            raise ValueError(f"unknown feature_combine {self.feature_combine!r}")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"unknown precision {self.precision!r}")

    @property
    def num_layers(self):
        # one point-grid transformer layer per U-Net level, down and up path
        return 2 * self.unet_depth - 1

    def level_resolutions(self):
        """Grid resolution at each encoder level (top two levels share)."""
        res = []
        r = self.base_resolution
        for lvl in range(self.unet_depth):
            res.append(r)
            if self.enable_downsampling and lvl >= 1:
                r //= 2
        return res

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(d):
        return ModelConfig(**d)
