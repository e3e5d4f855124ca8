"""
Midpoint tensor grids over a rectangular search region

All integrals in k2gof are midpoint Darboux sums on one Grid. Cumulative
quantities (model cdfs, projection coefficients, empirical cdfs) are
prefix sums over cells, and the indicator 1{t <= x} is evaluated at cell
level: a point t counts as below node x when t's cell index is <= x's cell
index in every coordinate. The node's own cell is therefore included, and
the cdf at the maximal node is exactly the total mass.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator

from k2gof.errors import GridMismatch, InputError


@dataclass(frozen=True)
class SupportRect:
    """Closed rectangle [lower, upper] in d dimensions"""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) != len(upper) or len(lower) < 1:
            raise InputError("SupportRect needs matching lower/upper of dimension >= 1")
        if any(not np.isfinite(v) for v in lower + upper):
            raise InputError("SupportRect bounds must be finite")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise InputError(f"SupportRect requires lower < upper, got {lower} / {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of rows inside the closed rectangle"""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True, eq=False)
class Grid:
    """
    Midpoint tensor grid

    Attributes:
        rect: Region covered by the cells
        shape: Cells per axis (n1, n2, ...)
        axes: Midpoint coordinates along each axis
        widths: Cell width along each axis
        cell_weight: Volume of one cell
    """

    rect: SupportRect
    shape: Tuple[int, ...]
    axes: Tuple[np.ndarray, ...] = field(init=False, repr=False)
    widths: np.ndarray = field(init=False, repr=False)
    cell_weight: float = field(init=False)

    def __post_init__(self):
        lower = np.asarray(self.rect.lower)
        upper = np.asarray(self.rect.upper)
        widths = (upper - lower) / np.asarray(self.shape, dtype=float)
        axes = tuple(
            lower[k] + (np.arange(n) + 0.5) * widths[k] for k, n in enumerate(self.shape)
        )
        for ax in axes:
            ax.setflags(write=False)
        widths.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "cell_weight", float(np.prod(widths)))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def same_as(self, other: "Grid") -> bool:
        return self is other or (self.rect == other.rect and self.shape == other.shape)

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (size, d), in C (row-major) order"""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def coordinate(self, k: int) -> "GridField":
        """Field whose value at each node is the node's k-th coordinate"""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return GridField(self, mesh[k])

    def constant(self, value: float = 1.0) -> "GridField":
        return GridField(self, np.full(self.shape, float(value)))

    def field_from_nodes(self, values: np.ndarray) -> "GridField":
        """Wrap a flat array in node order as a GridField"""
        return GridField(self, np.asarray(values, dtype=float).reshape(self.shape))

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        """
        Integer cell index of each point, shape (m, d)

        Points on the upper boundary belong to the last cell; indices are
        clipped into range so boundary points stay in their edge cell.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lower = np.asarray(self.rect.lower)
        idx = np.floor((pts - lower) / self.widths).astype(np.int64)
        return np.clip(idx, 0, np.asarray(self.shape) - 1)


@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar field with one value per node of ``grid``"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            values = values.reshape(self.grid.shape)
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def _other(self, other: Union["GridField", float]) -> Union[np.ndarray, float]:
        if isinstance(other, GridField):
            check_same_grid(self, other)
            return other.values
        return float(other)

    def __add__(self, other):
        return GridField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridField(self.grid, -self.values)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def at(self, points: np.ndarray) -> np.ndarray:
        """
        Multilinear interpolation of node values at arbitrary points

        Points between the boundary and the outermost midpoints take the
        value of the nearest edge (no extrapolation).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.array([ax[0] for ax in self.grid.axes])
        hi = np.array([ax[-1] for ax in self.grid.axes])
        interp = RegularGridInterpolator(self.grid.axes, self.values, method="linear")
        return interp(np.clip(pts, lo, hi))

    def to_frame(self, value_name: str = "value") -> pd.DataFrame:
        """Node coordinates and values as columns x1..xd, ``value_name``"""
        nodes = self.grid.nodes()
        frame = pd.DataFrame(nodes, columns=[f"x{k + 1}" for k in range(self.grid.dim)])
        frame[value_name] = self.flat()
        return frame


def check_same_grid(*fields: GridField) -> Grid:
    """Return the shared grid or raise GridMismatch"""
    grid = fields[0].grid
    for other in fields[1:]:
        if not grid.same_as(other.grid):
            raise GridMismatch(
                f"Fields live on different grids: {grid.shape} over {grid.rect} "
                f"vs {other.grid.shape} over {other.grid.rect}"
            )
    return grid


def build_grid(rect: SupportRect, *cells: int) -> Grid:
    """
    Build a midpoint tensor grid

    Args:
        rect: Region to cover
        *cells: Cells per axis, one count per dimension of ``rect``

    Returns:
        Grid: Grid with prod(cells) nodes at cell midpoints

    Raises:
        InputError: On a dimension mismatch or fewer than 2 cells on an axis

    Example:
        grid = build_grid(SupportRect((1, 1), (20, 25)), 50, 40)
        grid.size         # 2000
        grid.cell_weight  # 0.228
    """
    if len(cells) != rect.dim:
        raise InputError(f"Grid needs {rect.dim} cell counts, got {len(cells)}")
    shape = tuple(int(c) for c in cells)
    if any(c < 2 for c in shape):
        raise InputError(f"Grid needs at least 2 cells per axis, got {shape}")
    return Grid(rect, shape)


def integrate(h: GridField) -> float:
    """Midpoint Darboux sum of ``h`` over the grid"""
    return float(np.sum(h.values) * h.grid.cell_weight)


def inner_product(g: GridField, h: GridField, density: GridField) -> float:
    """<g, h> under ``density``: sum of g*h*density*cell_weight"""
    grid = check_same_grid(g, h, density)
    return float(np.sum(g.values * h.values * density.values) * grid.cell_weight)


def prefix_sum(values: np.ndarray) -> np.ndarray:
    """Cumulative sum along every axis in turn (d-dimensional prefix sum)"""
    out = np.asarray(values, dtype=float)
    for axis in range(out.ndim):
        out = np.cumsum(out, axis=axis)
    return out


def partial_integral(h: GridField, density: GridField) -> GridField:
    """
    Cumulative integral of h*density up to each node, own cell included

    At node x the value is the Darboux sum of h*density over all cells t
    with t <= x componentwise.
    """
    grid = check_same_grid(h, density)
    return GridField(grid, prefix_sum(h.values * density.values * grid.cell_weight))


def empirical_cdf(
    grid: Grid, points: np.ndarray, weights: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    (Weighted) count of points below each node at cell level

    Args:
        grid: Grid defining the cells
        points: Array of shape (m, d)
        weights: Optional per-point weights (default 1)

    Returns:
        np.ndarray: Array of grid.shape with sum of weights of points whose
        cell index is <= the node's index in every coordinate
    """
    idx = grid.cell_index(points)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    w = None if weights is None else np.asarray(weights, dtype=float)
    counts = np.bincount(flat, weights=w, minlength=grid.size).astype(float)
    return prefix_sum(counts.reshape(grid.shape))


def indicator_field(grid: Grid, node_index: Sequence[int]) -> GridField:
    """Field over t of 1{t <= x} for the node with multi-index ``node_index``"""
    mesh = np.meshgrid(*[np.arange(n) for n in grid.shape], indexing="ij")
    mask = np.ones(grid.shape, dtype=bool)
    for k, m in enumerate(mesh):
        mask &= m <= node_index[k]
    return GridField(grid, mask.astype(float))
