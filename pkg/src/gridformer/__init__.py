"""GridFormer: point-grid transformer occupancy fields for surface
reconstruction, with two-stage boundary-optimized training and
multiresolution isosurface extraction."""

from .dataset import Dataset
from .estimator import OccupancyReconstructor
from .experiment import ExperimentConfig, load_config, save_config
from .fields import QuerySet, ShapeSpec, analytic_occupancy, extract_boundary, \
    sample_queries, sample_surface, signed_distance
from .meshing import Mesh, ScalarGrid, marching_cubes, mise_extract, \
    read_obj, write_obj
from .metrics import MetricsReport, evaluate_reconstruction, volumetric_iou
from .model import EncodedField, ModelConfig, decode, encode, init_params, \
    load_checkpoint, occupancy_probability, save_checkpoint
from .training import TrainConfig, train_stage1, train_stage2

__version__ = "0.1.0"

__all__ = [
    "Dataset", "EncodedField", "ExperimentConfig", "Mesh", "MetricsReport",
    "ModelConfig", "OccupancyReconstructor", "QuerySet", "ScalarGrid",
    "ShapeSpec", "TrainConfig", "analytic_occupancy", "decode", "encode",
    "evaluate_reconstruction", "extract_boundary", "init_params",
    "load_checkpoint", "load_config", "marching_cubes", "mise_extract",
    "occupancy_probability", "read_obj", "sample_queries", "sample_surface",
    "save_checkpoint", "save_config", "signed_distance", "train_stage1",
    "train_stage2", "volumetric_iou", "write_obj",
]
