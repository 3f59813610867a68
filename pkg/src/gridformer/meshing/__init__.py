from .marching import Mesh, ScalarGrid, empty_mesh, marching_cubes, read_obj, write_obj
from .mise import mise_extract

__all__ = [
    "Mesh", "ScalarGrid", "empty_mesh", "marching_cubes",
    "read_obj", "write_obj", "mise_extract",
]
