"""Analytic ground-truth occupancy fields and samplers.

Shapes live inside [0.05, 0.95]^3 of the unit cube; occupancy is decided
exactly from the analytic signed distance. These stand in for watertight
meshes as training/evaluation ground truth.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

_PAD = 0.05


@dataclass(frozen=True)
class ShapeSpec:
    """Analytic shape: sphere, box, torus (z-axis), or union of members."""

    kind: str
    center: tuple = (0.5, 0.5, 0.5)
    radius: float = 0.25          # sphere
    half_extents: tuple = (0.2, 0.2, 0.2)  # box
    major_radius: float = 0.25    # torus
    minor_radius: float = 0.08    # torus
    members: tuple = ()           # union

    def __post_init__(self):
        if self.kind not in ("sphere", "box", "torus", "union"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.kind == "union" and not self.members:
            raise ValueError("union needs at least one member")

    @staticmethod
    def sphere(center=(0.5, 0.5, 0.5), radius=0.25):
        return ShapeSpec("sphere", center=tuple(center), radius=radius)

    @staticmethod
    def box(center=(0.5, 0.5, 0.5), half_extents=(0.2, 0.2, 0.2)):
        return ShapeSpec("box", center=tuple(center), half_extents=tuple(half_extents))

    @staticmethod
    def torus(center=(0.5, 0.5, 0.5), major_radius=0.25, minor_radius=0.08):
        return ShapeSpec("torus", center=tuple(center),
                         major_radius=major_radius, minor_radius=minor_radius)

    @staticmethod
    def union(*members):
        return ShapeSpec("union", members=tuple(members))


@dataclass
class PointBatch:
    """Input point coordinates, N x 3 in [0,1]^3."""

    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3 or len(self.coords) < 1:
            raise ValueError(f"coords must be (N>=1, 3), got {self.coords.shape}")


@dataclass
class QuerySet:
    """Query coordinates with binary occupancy labels and a boundary mask."""

    coords: np.ndarray
    labels: np.ndarray
    boundary_mask: np.ndarray = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be binary")
        if self.boundary_mask is None:
            self.boundary_mask = np.zeros(len(self.coords), dtype=bool)
        else:
            self.boundary_mask = np.asarray(self.boundary_mask, dtype=bool)


def signed_distance(spec, q):
    """Exact signed distance (negative inside) for points q (M, 3)."""
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    c = np.asarray(spec.center)
    if spec.kind == "sphere":
        return np.linalg.norm(q - c, axis=1) - spec.radius
    if spec.kind == "box":
        d = np.abs(q - c) - np.asarray(spec.half_extents)
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
        inside = np.minimum(d.max(axis=1), 0.0)
        return outside + inside
    if spec.kind == "torus":
        rel = q - c
        ring = np.hypot(np.hypot(rel[:, 0], rel[:, 1]) - spec.major_radius, rel[:, 2])
        return ring - spec.minor_radius
    if spec.kind == "union":
        return np.min([signed_distance(m, q) for m in spec.members], axis=0)
    raise ValueError(spec.kind)


def _check_domain(q):
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    if q.size and (q.min() < 0.0 or q.max() > 1.0):
        raise ValueError("query outside [0, 1]^3")
    return q


def analytic_occupancy(spec, q):
    """1 iff q is inside the shape (surface counted inside); q in [0,1]^3."""
    q = _check_domain(q)
    return (signed_distance(spec, q) <= 0.0).astype(np.uint8)


def _surface_normal(spec, p):
    """Outward unit normal at on-surface points p of a primitive."""
    p = np.atleast_2d(p)
    c = np.asarray(spec.center)
    if spec.kind == "sphere":
        n = p - c
    elif spec.kind == "box":
        # face normal: axis where |offset| / half_extent is largest
        rel = (p - c) / np.asarray(spec.half_extents)
        axis = np.argmax(np.abs(rel), axis=1)
        n = np.zeros_like(p)
        n[np.arange(len(p)), axis] = np.sign(rel[np.arange(len(p)), axis])
    elif spec.kind == "torus":
        rel = p - c
        rho = np.hypot(rel[:, 0], rel[:, 1])
        rho = np.maximum(rho, 1e-12)
        ring = np.stack([rel[:, 0] / rho * spec.major_radius,
                         rel[:, 1] / rho * spec.major_radius,
                         np.zeros(len(p))], axis=1)
        n = rel - ring
    else:
        raise ValueError(f"no normal for kind {spec.kind!r}")
    return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)


def _surface_area(spec):
    if spec.kind == "sphere":
        return 4.0 * np.pi * spec.radius ** 2
    if spec.kind == "box":
        a, b, c = spec.half_extents
        return 8.0 * (a * b + b * c + c * a)
    if spec.kind == "torus":
        return 4.0 * np.pi ** 2 * spec.major_radius * spec.minor_radius
    if spec.kind == "union":
        return sum(_surface_area(m) for m in spec.members)
    raise ValueError(spec.kind)


def _sample_primitive_surface(spec, n, rng):
    """n points uniform by area on one primitive, with outward normals."""
    c = np.asarray(spec.center)
    if spec.kind == "sphere":
        d = rng.standard_normal((n, 3))
        d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
        return c + spec.radius * d, d
    if spec.kind == "box":
        h = np.asarray(spec.half_extents)
        # six faces, area-weighted
        face_areas = np.array([h[1] * h[2], h[1] * h[2],
                               h[0] * h[2], h[0] * h[2],
                               h[0] * h[1], h[0] * h[1]]) * 4.0
        face = rng.choice(6, size=n, p=face_areas / face_areas.sum())
        uv = rng.uniform(-1.0, 1.0, size=(n, 2))
        pts = np.empty((n, 3))
        for f in range(6):
            m = face == f
            axis, sign = divmod(f, 2)
            sign = 1.0 if sign == 0 else -1.0
            others = [a for a in range(3) if a != axis]
            pts[m, axis] = sign * h[axis]
            pts[m, others[0]] = uv[m, 0] * h[others[0]]
            pts[m, others[1]] = uv[m, 1] * h[others[1]]
        pts = c + pts
        return pts, _surface_normal(spec, pts)
    if spec.kind == "torus":
        out = np.empty((n, 3))
        filled = 0
        while filled < n:
            k = max(n - filled, 16)
            u = rng.uniform(0.0, 2.0 * np.pi, k)   # around the ring
            v = rng.uniform(0.0, 2.0 * np.pi, k)   # around the tube
            # area element ~ R + r cos(v); rejection keeps sampling uniform
            keep = rng.uniform(0.0, 1.0, k) <= (
                (spec.major_radius + spec.minor_radius * np.cos(v))
                / (spec.major_radius + spec.minor_radius)
            )
            u, v = u[keep], v[keep]
            k = min(len(u), n - filled)
            rho = spec.major_radius + spec.minor_radius * np.cos(v[:k])
            out[filled:filled + k] = c + np.stack(
                [rho * np.cos(u[:k]), rho * np.sin(u[:k]),
                 spec.minor_radius * np.sin(v[:k])], axis=1)
            filled += k
        return out, _surface_normal(spec, out)
    raise ValueError(spec.kind)


def sample_surface(spec, n, sigma=0.0, seed=0, return_normals=False):
    """n surface points, uniform by area, plus Gaussian coordinate noise.

    Union members are chosen area-weighted; points inside a sibling are
    rejected so only the visible surface is sampled. Noisy coordinates are
    clamped to [0, 1]. Deterministic for a fixed seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    prims = list(spec.members) if spec.kind == "union" else [spec]
    areas = np.array([_surface_area(m) for m in prims])
    probs = areas / areas.sum()

    pts = np.empty((n, 3))
    nrm = np.empty((n, 3))
    filled = 0
    while filled < n:
        k = max(n - filled, 16)
        which = rng.choice(len(prims), size=k, p=probs)
        batch = np.empty((k, 3))
        bnrm = np.empty((k, 3))
        for i, m in enumerate(prims):
            sel = which == i
            if sel.any():
                batch[sel], bnrm[sel] = _sample_primitive_surface(m, int(sel.sum()), rng)
        if len(prims) > 1:
            visible = np.ones(k, dtype=bool)
            for i, m in enumerate(prims):
                others = which != i
                if others.any():
                    visible[others] &= signed_distance(m, batch[others]) >= 0.0
            batch, bnrm = batch[visible], bnrm[visible]
        k = min(len(batch), n - filled)
        pts[filled:filled + k] = batch[:k]
        nrm[filled:filled + k] = bnrm[:k]
        filled += k

    if sigma > 0:
        pts = pts + rng.normal(0.0, sigma, size=pts.shape)
    pts = np.clip(pts, 0.0, 1.0)
    if return_normals:
        return pts, nrm
    return PointBatch(pts)


def sample_queries(spec, m, seed=0):
    """m uniform queries in [0,1]^3 labeled by the analytic occupancy."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 1.0, size=(m, 3))
    labels = analytic_occupancy(spec, coords)
    return QuerySet(coords, labels)


def extract_boundary(qs, boundary_radius):
    """Mark queries with an opposite-label neighbor within the radius.

    Reuses the original points, never resamples. Emits a warning when the
    set contains no opposite-label pair inside the radius.
    """
    if boundary_radius <= 0:
        raise ValueError("boundary_radius must be > 0")
    mask = np.zeros(len(qs.coords), dtype=bool)
    pos = np.flatnonzero(qs.labels == 1)
    neg = np.flatnonzero(qs.labels == 0)
    if len(pos) and len(neg):
        tp = cKDTree(qs.coords[pos])
        tn = cKDTree(qs.coords[neg])
        pairs = tp.query_ball_tree(tn, boundary_radius)
        for i, js in enumerate(pairs):
            if js:
                mask[pos[i]] = True
                mask[neg[js]] = True
    if not mask.any():
        warnings.warn("no boundary points found within the given radius")
    return QuerySet(qs.coords, qs.labels, mask)
