"""Numerical laboratory for the first boundary value problem of Abreu's equation."""

__version__ = "0.1.0"

from .barrier import BarrierG, check_conditions
from .convexity import ConvexGridFunction, certify_convex, project_convex
from .grid import GridDomain

__all__ = [
    "BarrierG",
    "check_conditions",
    "ConvexGridFunction",
    "certify_convex",
    "project_convex",
    "GridDomain",
    "__version__",
]
