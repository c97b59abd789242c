"""Ball-world navigation: quasi-conformal workspace mapping with CBF control."""

from . import errors
from .geometry import PLMap, PolyWorld, TriMesh, fill_holes, locate
from .meshing import triangulate

__all__ = [
    "errors",
    "PolyWorld",
    "TriMesh",
    "PLMap",
    "fill_holes",
    "locate",
    "triangulate",
]

__version__ = "0.1.0"
