"""Reconstruction evaluation: volumetric IoU, Chamfer distances, normal
consistency, and F-Score, with point-sampled surfaces.

Nearest neighbors run through an exact KD-tree; tests cross-check every
metric against O(n^2) brute force.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .fields import analytic_occupancy, sample_surface


@dataclass
class MetricsReport:
    iou: float
    chamfer_l1_x100: float
    chamfer_l2_x10000: float
    normal_consistency: float
    f_score_1pct: float
    n_surface_samples: int
    n_iou_queries: int
    seed: int

    KEYS = ("iou", "chamfer_l1_x100", "chamfer_l2_x10000",
            "normal_consistency", "f_score_1pct",
            "n_surface_samples", "n_iou_queries", "seed")

    def to_text(self):
        """Flat key-value document, one metric per line."""
        lines = []
        for key in self.KEYS:
            val = getattr(self, key)
            if isinstance(val, float):
                lines.append(f"{key} {val:.10g}")
            else:
                lines.append(f"{key} {val}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text):
        kv = {}
        for line in text.strip().splitlines():
            key, val = line.split()
            kv[key] = val
        return MetricsReport(
            iou=float(kv["iou"]),
            chamfer_l1_x100=float(kv["chamfer_l1_x100"]),
            chamfer_l2_x10000=float(kv["chamfer_l2_x10000"]),
            normal_consistency=float(kv["normal_consistency"]),
            f_score_1pct=float(kv["f_score_1pct"]),
            n_surface_samples=int(kv["n_surface_samples"]),
            n_iou_queries=int(kv["n_iou_queries"]),
            seed=int(kv["seed"]),
        )


def volumetric_iou(pred_occ, gt_occ):
    """|pred AND gt| / |pred OR gt|; 1.0 when both are empty."""
    pred = np.asarray(pred_occ).astype(bool)
    gt = np.asarray(gt_occ).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    if len(pred) < 1:
        raise ValueError("need at least one query")
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


def sample_mesh_points(mesh, n, seed=0):
    """n points uniform by triangle area, carrying face normals."""
    if mesh.is_empty:
        raise ValueError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    tri = rng.choice(len(areas), size=n, p=areas / areas.sum())
    u = rng.uniform(size=(n, 1))
    v = rng.uniform(size=(n, 1))
    flip = (u + v) > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    a = mesh.vertices[mesh.triangles[tri, 0]]
    b = mesh.vertices[mesh.triangles[tri, 1]]
    c = mesh.vertices[mesh.triangles[tri, 2]]
    pts = a + u * (b - a) + v * (c - a)
    normals = mesh.face_normals()[tri]
    return pts, normals


def chamfer_and_fscore(a, b, threshold=0.01):
    """Symmetric Chamfer-L1/L2 and F-Score at an absolute threshold.

    cd_l1 = 0.5 * (mean_a d(x, b) + mean_b d(y, a)); cd_l2 uses squared
    distances; F-Score is the harmonic mean of precision and recall of points
    within the threshold.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer_and_fscore needs non-empty point sets")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    cd_l1 = 0.5 * (d_ab.mean() + d_ba.mean())
    cd_l2 = 0.5 * ((d_ab ** 2).mean() + (d_ba ** 2).mean())
    precision = float((d_ab <= threshold).mean())
    recall = float((d_ba <= threshold).mean())
    if precision + recall == 0.0:
        fscore = 0.0
    else:
        fscore = 2.0 * precision * recall / (precision + recall)
    return float(cd_l1), float(cd_l2), fscore


def normal_consistency(a_pts, a_nrm, b_pts, b_nrm):
    """Symmetric mean absolute cosine between nearest-neighbor normals."""
    a_nrm = np.asarray(a_nrm, dtype=np.float64)
    b_nrm = np.asarray(b_nrm, dtype=np.float64)
    for nrm in (a_nrm, b_nrm):
        err = np.abs(np.linalg.norm(nrm, axis=1) - 1.0)
        if err.size and err.max() > 1e-6:
            raise ValueError("normals must be unit length")
    _, idx_ab = cKDTree(b_pts).query(a_pts)
    _, idx_ba = cKDTree(a_pts).query(b_pts)
    ab = np.abs((a_nrm * b_nrm[idx_ab]).sum(axis=1)).mean()
    ba = np.abs((b_nrm * a_nrm[idx_ba]).sum(axis=1)).mean()
    return float(0.5 * (ab + ba))


def evaluate_reconstruction(mesh, spec, occupancy_fn=None, n_surface=100000,
                            n_iou=100000, fscore_threshold=0.01, seed=0):
    """Full metric suite against the analytic ground truth.

    occupancy_fn maps (M, 3) queries to binary occupancy; when omitted, the
    analytic field itself is used (oracle mode, IoU = 1).
    """
    if mesh.is_empty:
        raise ValueError("cannot evaluate an empty mesh")
    gt_pts, gt_nrm = sample_surface(spec, n_surface, sigma=0.0, seed=seed,
                                    return_normals=True)
    pred_pts, pred_nrm = sample_mesh_points(mesh, n_surface, seed=seed + 1)
    cd_l1, cd_l2, fscore = chamfer_and_fscore(pred_pts, gt_pts, fscore_threshold)
    nc = normal_consistency(pred_pts, pred_nrm, gt_pts, gt_nrm)

    rng = np.random.default_rng(seed + 2)
    queries = rng.uniform(0.0, 1.0, size=(n_iou, 3))
    gt_occ = analytic_occupancy(spec, queries)
    if occupancy_fn is None:
        pred_occ = gt_occ
    else:
        pred_occ = np.asarray(occupancy_fn(queries)).astype(np.uint8)
    iou = volumetric_iou(pred_occ, gt_occ)

    return MetricsReport(
        iou=iou,
        chamfer_l1_x100=cd_l1 * 100.0,
        chamfer_l2_x10000=cd_l2 * 10000.0,
        normal_consistency=nc,
        f_score_1pct=fscore,
        n_surface_samples=n_surface,
        n_iou_queries=n_iou,
        seed=seed,
    )
