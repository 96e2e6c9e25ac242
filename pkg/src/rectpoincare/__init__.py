"""Numerical verification of Poincare-Sobolev type inequalities on rectangles and products of cubes."""

from .grid import BASIS_PRODUCT, BASIS_RECT, Box, Grid, GridFunction, Rect, build_grid, root_rect
from .report import CheckReport
from .verify import CATALOG, run_check, sweep

__version__ = "0.1.0"

__all__ = ["BASIS_PRODUCT", "BASIS_RECT", "Box", "CATALOG", "CheckReport", "Grid", "GridFunction", "Rect",
           "build_grid", "root_rect", "run_check", "sweep", "__version__"]
