"""Multiresolution isosurface extraction: refine only cells straddling the
threshold, then polygonize the assembled full-resolution lattice."""

import numpy as np

from .marching import Mesh, ScalarGrid, marching_cubes


def _corner_offsets(s):
    return [(dx * s, dy * s, dz * s) for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]


def mise_extract(field_eval, initial_res=32, steps=2, tau=0.5):
    """Coarse-to-fine extraction of the tau level set of a probability field.

    field_eval maps (M, 3) coordinates in [0,1]^3 to M probabilities.
    initial_res counts coarse cells per axis; each step halves the cell size,
    so the final lattice matches a dense grid of initial_res * 2**steps cells.
    Returns (mesh, evaluation_count); the mesh equals dense extraction
    whenever the field stays on one side of tau across unrefined cells.
    """
    if initial_res < 2:
        raise ValueError("initial_res must be >= 2")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    final_res = initial_res * (2 ** steps)
    n = final_res + 1
    values = np.zeros((n, n, n))
    evaluated = np.zeros((n, n, n), dtype=bool)
    count = 0

    def evaluate(ix, iy, iz):
        nonlocal count
        need = ~evaluated[ix, iy, iz]
        if need.any():
            px, py, pz = ix[need], iy[need], iz[need]
            coords = np.stack([px, py, pz], axis=1) / final_res
            values[px, py, pz] = np.asarray(field_eval(coords), dtype=np.float64)
            evaluated[px, py, pz] = True
            count += len(px)

    s0 = 2 ** steps
    coarse = np.arange(0, n, s0)
    gx, gy, gz = np.meshgrid(coarse, coarse, coarse, indexing="ij")
    evaluate(gx.ravel(), gy.ravel(), gz.ravel())

    def active_cells(cx, cy, cz, s):
        """Among cells with min corner (cx, cy, cz) and size s, keep those
        whose corners straddle tau."""
        inside = None
        straddle = np.zeros(len(cx), dtype=bool)
        first = None
        for ox, oy, oz in _corner_offsets(s):
            cur = values[cx + ox, cy + oy, cz + oz] > tau
            if first is None:
                first = cur
            else:
                straddle |= cur != first
        return cx[straddle], cy[straddle], cz[straddle]

    cells = np.arange(0, final_res, s0)
    cx, cy, cz = (a.ravel() for a in np.meshgrid(cells, cells, cells, indexing="ij"))
    cx, cy, cz = active_cells(cx, cy, cz, s0)

    s = s0
    for _ in range(steps):
        half = s // 2
        # evaluate the 3x3x3 sub-lattice of every active cell
        if len(cx):
            offs = np.array([(ox, oy, oz)
                             for ox in (0, half, s)
                             for oy in (0, half, s)
                             for oz in (0, half, s)], dtype=np.int64)
            ex = (cx[:, None] + offs[:, 0]).ravel()
            ey = (cy[:, None] + offs[:, 1]).ravel()
            ez = (cz[:, None] + offs[:, 2]).ravel()
            evaluate(ex, ey, ez)
            # split into 8 children and keep the straddling ones
            child = np.array([(ox, oy, oz)
                              for ox in (0, half)
                              for oy in (0, half)
                              for oz in (0, half)], dtype=np.int64)
            ncx = (cx[:, None] + child[:, 0]).ravel()
            ncy = (cy[:, None] + child[:, 1]).ravel()
            ncz = (cz[:, None] + child[:, 2]).ravel()
            cx, cy, cz = active_cells(ncx, ncy, ncz, half)
        s = half if half else s

    # fill unevaluated lattice points from the finest evaluated ancestor
    # corner; within an unrefined cell all corners sit on one side of tau,
    # so the filled value lands on the correct side too
    miss = ~evaluated
    if miss.any():
        mx, my, mz = np.nonzero(miss)
        filled = np.zeros(len(mx), dtype=bool)
        step = 2
        while step <= s0 and not filled.all():
            fx = (mx // step) * step
            fy = (my // step) * step
            fz = (mz // step) * step
            ok = ~filled & evaluated[fx, fy, fz]
            values[mx[ok], my[ok], mz[ok]] = values[fx[ok], fy[ok], fz[ok]]
            filled |= ok
            step *= 2
        if not filled.all():
            raise AssertionError("unfilled lattice points after refinement")

    mesh = marching_cubes(ScalarGrid(values, final_res), tau)
    return mesh, count
