"""Numerical verification toolkit for vector-valued infinity-harmonic maps.

Submodules cover small dense tensor algebra (``tensor_core``), symbolic maps and
their jets (``map_model``), the infinity-Laplacian (``infinity_ops``), surface
geometry (``geometry``), variational testers (``variations``), the parametrized
gradient flow (``flow``) and the discrete p-Laplacian (``psolver``).
"""

from .map_model import Grid, MapSpec, catalog, jet, load_map
from .infinity_ops import residual

__version__ = "0.1.0"

__all__ = ["Grid", "MapSpec", "catalog", "jet", "load_map", "residual", "__version__"]
