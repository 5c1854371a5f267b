"""Heat-conduction topology optimization with a multiscale multigrid preconditioner."""

from mmgtop.grid import BoundarySpec, DirichletPatch, GridSpec, HierarchicalGrid, build_hierarchy
from mmgtop.material import MaterialModel

__all__ = [
    "BoundarySpec",
    "DirichletPatch",
    "GridSpec",
    "HierarchicalGrid",
    "MaterialModel",
    "build_hierarchy",
]

__version__ = "0.1.0"
