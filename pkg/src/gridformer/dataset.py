"""GFDS dataset container: little-endian binary file of named arrays.

Layout: magic "GFDS", u32 format version, u32 array count, then per array:
u32 name length + UTF-8 name, u8 dtype code (0=f32, 1=u8, 2=u32), u8 rank,
u32 extents, raw row-major data.
"""

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"GFDS"
FORMAT_VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("u1"), 2: np.dtype("<u4")}
_CODE_FOR_DTYPE = {v: k for k, v in _DTYPE_CODES.items()}


def write_arrays(path, arrays):
    """Write an ordered dict of name -> array. Dtypes must be f32/u8/u32."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            code = _CODE_FOR_DTYPE.get(arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype)
            if code is None:
                raise ValueError(f"unsupported dtype {arr.dtype} for array {name!r}")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<BB", code, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def read_arrays(path):
    """Read a GFDS file back into a dict of name -> array."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a GFDS file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported GFDS version {version}")
        (count,) = struct.unpack("<I", f.read(4))
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            code, rank = struct.unpack("<BB", f.read(2))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
            dtype = _DTYPE_CODES[code]
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(f.read(n * dtype.itemsize), dtype=dtype)
            arrays[name] = data.reshape(shape).copy()
    return arrays


@dataclass
class Dataset:
    """One reconstruction scene: input points plus labeled queries."""

    points: np.ndarray           # N x 3 f32
    queries: np.ndarray          # M x 3 f32
    labels: np.ndarray           # M u8
    boundary_mask: np.ndarray = None  # M u8, optional

    def save(self, path):
        arrays = {
            "points": self.points.astype("<f4"),
            "queries": self.queries.astype("<f4"),
            "labels": self.labels.astype("u1"),
        }
        if self.boundary_mask is not None:
            arrays["boundary_mask"] = self.boundary_mask.astype("u1")
        write_arrays(path, arrays)

    @staticmethod
    def load(path):
        arrays = read_arrays(path)
        for key in ("points", "queries", "labels"):
            if key not in arrays:
                raise ValueError(f"{path}: missing required array {key!r}")
        return Dataset(
            points=arrays["points"],
            queries=arrays["queries"],
            labels=arrays["labels"],
            boundary_mask=arrays.get("boundary_mask"),
        )
