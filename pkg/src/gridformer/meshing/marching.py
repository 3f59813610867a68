"""Dense marching cubes over a scalar lattice with exact edge welding."""

from dataclasses import dataclass, field

import numpy as np

from .mc_tables import EDGE_CORNERS, TRI_TABLE

_CORNER_SHIFTS = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
                  (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]

_TRI_TABLE = np.asarray(TRI_TABLE, dtype=np.int64)
_CASE_NV = (_TRI_TABLE >= 0).sum(axis=1)

# per local edge: min corner offset and axis (canonical direction)
_EDGE_BASE = np.zeros((12, 3), dtype=np.int64)
_EDGE_AXIS = np.zeros(12, dtype=np.int64)
for _k, (_a, _b) in enumerate(EDGE_CORNERS):
    pa = np.array(_CORNER_SHIFTS[_a])
    pb = np.array(_CORNER_SHIFTS[_b])
    lo = np.minimum(pa, pb)
    _EDGE_BASE[_k] = lo
    _EDGE_AXIS[_k] = int(np.flatnonzero(pa != pb)[0])


@dataclass
class ScalarGrid:
    """Scalar samples on a cubic lattice over [0,1]^3.

    ``res`` counts cells per axis; values has shape (res+1,)*3 with sample i
    at coordinate i/res.
    """

    values: np.ndarray
    res: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.res + 1
        if self.values.shape != (n, n, n):
            raise ValueError(
                f"values shape {self.values.shape} inconsistent with res {self.res}"
            )


@dataclass
class Mesh:
    """Vertex/triangle soup with derived per-vertex normals."""

    vertices: np.ndarray
    triangles: np.ndarray
    _normals: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")

    def __len__(self):
        return len(self.triangles)

    @property
    def is_empty(self):
        return len(self.triangles) == 0

    def face_normals(self, normalized=True):
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        n = np.cross(b - a, c - a)
        if normalized:
            n = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-30)
        return n

    def face_areas(self):
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    @property
    def vertex_normals(self):
        """Area-weighted average of incident face normals, unit length."""
        if self._normals is None:
            acc = np.zeros_like(self.vertices)
            fn = self.face_normals(normalized=False)  # magnitude = 2 * area
            for k in range(3):
                np.add.at(acc, self.triangles[:, k], fn)
            self._normals = acc / np.maximum(
                np.linalg.norm(acc, axis=1, keepdims=True), 1e-30
            )
        return self._normals


def empty_mesh():
    return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def marching_cubes(sg: ScalarGrid, tau=0.5):
    """Polygonize the tau level set of the lattice.

    Crossing vertices are placed by linear interpolation along lattice edges
    and welded through deterministic edge keys. Triangles wind so normals
    point toward lower field values (outward for occupancy).
    """
    if not (0.0 < tau < 1.0):
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    v = sg.values
    res = sg.res
    n = res + 1
    inside = v > tau

    case = np.zeros((res, res, res), dtype=np.int64)
    for bit, (cx, cy, cz) in enumerate(_CORNER_SHIFTS):
        case |= inside[cx:cx + res, cy:cy + res, cz:cz + res].astype(np.int64) << bit

    flat_case = case.reshape(-1)
    nv = _CASE_NV[flat_case]
    active = np.flatnonzero(nv > 0)
    if active.size == 0:
        return empty_mesh()

    entries = _TRI_TABLE[flat_case[active]]
    local_edges = entries[entries >= 0]
    cell_rep = np.repeat(active, nv[active])
    ci = cell_rep // (res * res)
    cj = (cell_rep // res) % res
    ck = cell_rep % res

    base = _EDGE_BASE[local_edges]
    axis = _EDGE_AXIS[local_edges]
    ex = ci + base[:, 0]
    ey = cj + base[:, 1]
    ez = ck + base[:, 2]
    edge_id = ((ex * n + ey) * n + ez) * 3 + axis

    uniq, inv = np.unique(edge_id, return_inverse=True)
    tris = inv.reshape(-1, 3)

    pid = uniq // 3
    uaxis = uniq % 3
    ix = pid // (n * n)
    iy = (pid // n) % n
    iz = pid % n
    va = v[ix, iy, iz]
    vb = v[ix + (uaxis == 0), iy + (uaxis == 1), iz + (uaxis == 2)]
    t = np.clip((tau - va) / (vb - va), 0.0, 1.0)
    verts = np.stack([ix, iy, iz], axis=1).astype(np.float64)
    verts[np.arange(len(uniq)), uaxis] += t
    verts /= res

    mesh = _weld_and_clean(verts, tris)
    return _orient_outward(mesh, sg, tau)


def _weld_and_clean(verts, tris):
    # merge vertices coinciding to 1e-9, drop zero-area triangles
    key = np.round(verts / 1e-9).astype(np.int64)
    _, first, remap = np.unique(key, axis=0, return_index=True, return_inverse=True)
    verts = verts[first]
    tris = remap[tris]
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ok = (a != b) & (b != c) & (a != c)
    va = verts[tris[:, 0]]
    area2 = np.linalg.norm(
        np.cross(verts[tris[:, 1]] - va, verts[tris[:, 2]] - va), axis=1
    )
    ok &= area2 > 0.0
    tris = tris[ok]
    used = np.zeros(len(verts), dtype=bool)
    used[tris.reshape(-1)] = True
    new_idx = np.cumsum(used) - 1
    return Mesh(verts[used], new_idx[tris])


def _orient_outward(mesh, sg, tau):
    """Flip windings if normals point toward the higher-valued side."""
    if mesh.is_empty:
        return mesh
    centers = mesh.vertices[mesh.triangles].mean(axis=1)
    normals = mesh.face_normals()
    eps = 0.25 / sg.res
    lo = np.clip(centers - eps * normals, 0.0, 1.0)
    hi = np.clip(centers + eps * normals, 0.0, 1.0)
    f_lo = _sample_lattice(sg, lo)
    f_hi = _sample_lattice(sg, hi)
    # majority vote: normals must point toward lower occupancy
    if np.sum(f_hi - f_lo) > 0:
        mesh = Mesh(mesh.vertices, mesh.triangles[:, [0, 2, 1]])
    return mesh


def _sample_lattice(sg, p):
    """Trilinear sample of lattice-vertex values at points in [0,1]^3."""
    res = sg.res
    u = np.clip(p * res, 0.0, res)
    i0 = np.minimum(u.astype(np.int64), res - 1)
    w = u - i0
    out = np.zeros(len(p))
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                wt = ((w[:, 0] if dx else 1 - w[:, 0])
                      * (w[:, 1] if dy else 1 - w[:, 1])
                      * (w[:, 2] if dz else 1 - w[:, 2]))
                out += wt * sg.values[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    return out


def write_obj(path, mesh, with_normals=False):
    """ASCII OBJ: v lines, optional vn lines, 1-based f lines."""
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        if with_normals:
            for vn in mesh.vertex_normals:
                f.write(f"vn {vn[0]:.9g} {vn[1]:.9g} {vn[2]:.9g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def read_obj(path):
    verts, tris = [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                tris.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    if not verts:
        return empty_mesh()
    return Mesh(np.array(verts), np.array(tris, dtype=np.int64))
