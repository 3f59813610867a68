"""Scikit-learn style facade over the full pipeline.

``OccupancyReconstructor.fit(X, y, points=...)`` trains the field on labeled
query coordinates conditioned on a surface point cloud; ``predict`` labels new
queries and ``extract_mesh`` runs isosurface extraction.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .fields import QuerySet, extract_boundary
from .meshing import mise_extract
from .metrics import volumetric_iou
from .model import ModelConfig, init_params
from .training import TrainConfig, train_stage1, train_stage2
from .cli import _field_evaluator


class OccupancyReconstructor(ClassifierMixin, BaseEstimator):
    """Occupancy-field surface reconstructor with two-stage training.

    Parameters mirror the model and training configuration; ``fit`` expects
    X = query coordinates (M, 3) in [0, 1]^3, y = binary occupancy labels,
    and the conditioning surface point cloud via the ``points`` keyword.
    """

    def __init__(self, base_resolution=32, channels=32, unet_depth=4,
                 enable_downsampling=True, decoder_hidden=32, decoder_blocks=5,
                 precision="f32", stage1_lr=1e-4, stage2_lr=1e-6, margin=2.0,
                 boundary_radius=0.08, batch_points=2048, stage1_steps=2000,
                 stage2_steps=200, boundary_opt=True, seed=0):
        self.base_resolution = base_resolution
        self.channels = channels
        self.unet_depth = unet_depth
        self.enable_downsampling = enable_downsampling
        self.decoder_hidden = decoder_hidden
        self.decoder_blocks = decoder_blocks
        self.precision = precision
        self.stage1_lr = stage1_lr
        self.stage2_lr = stage2_lr
        self.margin = margin
        self.boundary_radius = boundary_radius
        self.batch_points = batch_points
        self.stage1_steps = stage1_steps
        self.stage2_steps = stage2_steps
        self.boundary_opt = boundary_opt
        self.seed = seed

    def _model_config(self):
        return ModelConfig(
            base_resolution=self.base_resolution, channels=self.channels,
            unet_depth=self.unet_depth,
            enable_downsampling=self.enable_downsampling,
            decoder_hidden=self.decoder_hidden,
            decoder_blocks=self.decoder_blocks, precision=self.precision,
            seed=self.seed,
        )

    def _train_config(self):
        return TrainConfig(
            stage1_lr=self.stage1_lr, stage2_lr=self.stage2_lr,
            margin=self.margin, boundary_radius=self.boundary_radius,
            batch_points=self.batch_points, stage1_steps=self.stage1_steps,
            stage2_steps=self.stage2_steps, seed=self.seed,
        )

    def fit(self, X, y, points=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if points is None:
            raise ValueError("fit requires the surface point cloud via points=")
        if len(X) != len(y):
            raise ValueError("X and y must have the same length")

        model_cfg = self._model_config()
        train_cfg = self._train_config()
        queryset = QuerySet(X, y)
        params = init_params(model_cfg)
        trace = train_stage1(points, queryset, model_cfg, params, train_cfg)
        if self.boundary_opt:
            queryset = extract_boundary(queryset, self.boundary_radius)
            if queryset.boundary_mask.any():
                trace += train_stage2(points, queryset, model_cfg, params,
                                      train_cfg)
        self.model_config_ = model_cfg
        self.params_ = params
        self.points_ = np.asarray(points, dtype=np.float64)
        self.loss_trace_ = trace
        self.classes_ = np.array([0, 1])
        self._evaluate = _field_evaluator(model_cfg, params, self.points_)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        p = self._evaluate(np.asarray(X, dtype=np.float64))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.uint8)

    def score(self, X, y):
        """Volumetric IoU of predicted vs given occupancy."""
        return volumetric_iou(self.predict(X), np.asarray(y))

    def extract_mesh(self, initial_res=32, steps=2, tau=0.5):
        check_is_fitted(self, "params_")
        mesh, _ = mise_extract(self._evaluate, initial_res=initial_res,
                               steps=steps, tau=tau)
        return mesh
