"""Experiment configuration: strict JSON with explicit keys.

Unknown keys are rejected so typos cannot silently fall back to defaults.
All randomness flows from the named seeds below; no wall-clock entropy.
"""

import json
from dataclasses import dataclass, field, asdict

from .fields import ShapeSpec
from .model import ModelConfig
from .training import TrainConfig


@dataclass
class DataConfig:
    n_points: int = 3000
    sigma: float = 0.005
    n_queries: int = 100000
    seed: int = 0


@dataclass
class MeshConfig:
    tau: float = 0.5
    mise_initial_res: int = 32
    mise_steps: int = 2


@dataclass
class EvalConfig:
    n_surface_samples: int = 100000
    n_iou_queries: int = 100000
    fscore_threshold: float = 0.01
    seed: int = 0


@dataclass
class ExperimentConfig:
    shape: ShapeSpec = field(default_factory=lambda: ShapeSpec.sphere())
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out_dir: str = "runs/default"


def _check_keys(given, allowed, context):
    unknown = set(given) - set(allowed)
    if unknown:
        raise ValueError(
            f"unknown key(s) {sorted(unknown)} in {context}; "
            f"allowed: {sorted(allowed)}"
        )


def shape_from_dict(d):
    _check_keys(d, {"kind", "center", "radius", "half_extents",
                    "major_radius", "minor_radius", "members"}, "shape")
    d = dict(d)
    kind = d.pop("kind")
    if kind == "union":
        members = tuple(shape_from_dict(m) for m in d.pop("members", []))
        if d:
            raise ValueError(f"union shape takes only 'members', got {sorted(d)}")
        return ShapeSpec.union(*members)
    for key in ("center", "half_extents"):
        if key in d:
            d[key] = tuple(d[key])
    return ShapeSpec(kind, **d)


def shape_to_dict(spec):
    if spec.kind == "union":
        return {"kind": "union", "members": [shape_to_dict(m) for m in spec.members]}
    base = {"kind": spec.kind, "center": list(spec.center)}
    if spec.kind == "sphere":
        base["radius"] = spec.radius
    elif spec.kind == "box":
        base["half_extents"] = list(spec.half_extents)
    elif spec.kind == "torus":
        base["major_radius"] = spec.major_radius
        base["minor_radius"] = spec.minor_radius
    return base


def _section(cls, d, context):
    _check_keys(d, {f.name for f in cls.__dataclass_fields__.values()}, context)
    return cls(**d)


def config_from_dict(d):
    _check_keys(d, {"shape", "data", "model", "train", "mesh", "eval", "out_dir"},
                "experiment config")
    return ExperimentConfig(
        shape=shape_from_dict(d.get("shape", {"kind": "sphere"})),
        data=_section(DataConfig, d.get("data", {}), "data"),
        model=_section(ModelConfig, d.get("model", {}), "model"),
        train=_section(TrainConfig, d.get("train", {}), "train"),
        mesh=_section(MeshConfig, d.get("mesh", {}), "mesh"),
        eval=_section(EvalConfig, d.get("eval", {}), "eval"),
        out_dir=d.get("out_dir", "runs/default"),
    )


def config_to_dict(cfg):
    return {
        "shape": shape_to_dict(cfg.shape),
        "data": asdict(cfg.data),
        "model": cfg.model.to_dict(),
        "train": asdict(cfg.train),
        "mesh": asdict(cfg.mesh),
        "eval": asdict(cfg.eval),
        "out_dir": cfg.out_dir,
    }


def load_config(path):
    with open(path) as f:
        return config_from_dict(json.load(f))


def save_config(path, cfg):
    with open(path, "w") as f:
        json.dump(config_to_dict(cfg), f, indent=2, sort_keys=True)
        f.write("\n")
