"""Midpoint tensor-grid quadrature"""

from k2gof.quadrature.grid import (
    Grid,
    GridField,
    SupportRect,
    build_grid,
    check_same_grid,
    empirical_cdf,
    indicator_field,
    inner_product,
    integrate,
    partial_integral,
    prefix_sum,
)

__all__ = [
    "Grid",
    "GridField",
    "SupportRect",
    "build_grid",
    "check_same_grid",
    "empirical_cdf",
    "indicator_field",
    "inner_product",
    "integrate",
    "partial_integral",
    "prefix_sum",
]
