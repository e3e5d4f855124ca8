"""
Tests for the midpoint tensor grid

Midpoint sums integrate affine functions exactly, and prefix sums and
cell-level counts have closed forms on small grids, so most checks here
are exact up to rounding.
"""

import numpy as np
import pytest

from k2gof.errors import GridMismatch, InputError
from k2gof.quadrature.grid import (
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


class TestSupportRect:
    """Test the closed truncation rectangle"""

    def test_contains_closed_boundary(self):
        rect = SupportRect((1.0, 1.0), (20.0, 25.0))
        pts = np.array([[1.0, 1.0], [20.0, 25.0], [10.0, 10.0], [0.999, 5.0], [5.0, 25.001]])
        assert rect.contains(pts).tolist() == [True, True, True, False, False]

    def test_bounds_are_coerced_to_float_tuples(self):
        rect = SupportRect([1, 2], [3, 4])
        assert rect.lower == (1.0, 2.0)
        assert rect.dim == 2

    @pytest.mark.parametrize(
        "lower,upper",
        [((1.0, 1.0), (0.5, 2.0)), ((1.0,), (2.0, 3.0)), ((), ()), ((0.0, -np.inf), (1.0, 1.0))],
    )
    def test_invalid_rectangles_rejected(self, lower, upper):
        with pytest.raises(InputError):
            SupportRect(lower, upper)


class TestBuildGrid:
    """Test grid construction and geometry"""

    def test_reference_grid_geometry(self, study_grid):
        assert study_grid.shape == (50, 40)
        assert study_grid.size == 2000
        assert study_grid.cell_weight == pytest.approx(0.228)
        assert study_grid.axes[0][0] == pytest.approx(1.19)
        assert study_grid.axes[1][-1] == pytest.approx(24.7)

    def test_nodes_are_row_major(self, unit_grid):
        nodes = unit_grid.nodes()
        assert nodes.shape == (80, 2)
        np.testing.assert_allclose(nodes[0], [0.05, 0.0625])
        np.testing.assert_allclose(nodes[1], [0.05, 0.1875])
        np.testing.assert_allclose(nodes[8], [0.15, 0.0625])

    def test_wrong_cell_count_rejected(self):
        rect = SupportRect((0.0, 0.0), (1.0, 1.0))
        with pytest.raises(InputError):
            build_grid(rect, 10)
        with pytest.raises(InputError):
            build_grid(rect, 10, 1)

    def test_cell_index_keeps_upper_boundary_in_last_cell(self, unit_grid):
        idx = unit_grid.cell_index(np.array([[0.0, 0.0], [1.0, 1.0], [0.15, 0.3]]))
        assert idx.tolist() == [[0, 0], [9, 7], [1, 2]]

    def test_same_as_compares_region_and_shape(self, unit_grid):
        twin = build_grid(SupportRect((0.0, 0.0), (1.0, 1.0)), 10, 8)
        finer = build_grid(SupportRect((0.0, 0.0), (1.0, 1.0)), 20, 8)
        assert unit_grid.same_as(twin)
        assert not unit_grid.same_as(finer)


class TestIntegration:
    """Test Darboux sums, inner products and prefix sums"""

    def test_constant_integrates_to_area(self, unit_grid, study_grid):
        assert integrate(unit_grid.constant(1.0)) == pytest.approx(1.0, abs=1e-14)
        assert integrate(study_grid.constant(1.0)) == pytest.approx(19.0 * 24.0, rel=1e-12)

    def test_midpoint_rule_exact_for_affine_functions(self, unit_grid):
        h = 2.0 * unit_grid.coordinate(0) + unit_grid.coordinate(1) + 3.0
        assert integrate(h) == pytest.approx(1.0 + 0.5 + 3.0, abs=1e-12)

    def test_inner_product_under_uniform_density(self, unit_grid):
        x = unit_grid.coordinate(0)
        one = unit_grid.constant(1.0)
        assert inner_product(x, one, one) == pytest.approx(0.5, abs=1e-12)

    def test_prefix_sum_matches_nested_cumsum(self):
        values = np.arange(12.0).reshape(3, 4)
        expected = np.cumsum(np.cumsum(values, axis=0), axis=1)
        np.testing.assert_array_equal(prefix_sum(values), expected)

    def test_partial_integral_of_uniform_density(self, unit_grid):
        one = unit_grid.constant(1.0)
        cdf = partial_integral(one, one)
        assert cdf.values[-1, -1] == pytest.approx(1.0, abs=1e-12)
        assert cdf.values[4, 3] == pytest.approx(0.5 * 0.5, abs=1e-12)


class TestEmpiricalCdf:
    """Test cell-level empirical counts"""

    def test_counts_points_in_own_and_lower_cells(self, unit_grid):
        pts = np.array([[0.05, 0.05], [0.55, 0.3], [0.95, 0.95]])
        counts = empirical_cdf(unit_grid, pts)
        assert counts[0, 0] == 1
        assert counts[5, 2] == 2
        assert counts[4, 7] == 1
        assert counts[-1, -1] == 3

    def test_weighted_counts(self, unit_grid):
        pts = np.array([[0.05, 0.05], [0.95, 0.95]])
        counts = empirical_cdf(unit_grid, pts, weights=np.array([0.25, 2.0]))
        assert counts[0, 0] == pytest.approx(0.25)
        assert counts[-1, -1] == pytest.approx(2.25)

    def test_indicator_field_matches_counts(self, unit_grid):
        ind = indicator_field(unit_grid, (3, 2))
        assert ind.values.sum() == 4 * 3
        assert ind.values[3, 2] == 1.0
        assert ind.values[4, 2] == 0.0


class TestGridField:
    """Test field arithmetic, interpolation and dumps"""

    def test_values_are_read_only(self, unit_grid):
        field = unit_grid.constant(2.0)
        with pytest.raises(ValueError):
            field.values[0, 0] = 1.0

    def test_arithmetic_with_scalars_and_fields(self, unit_grid):
        x = unit_grid.coordinate(0)
        h = 1.0 - 2.0 * x + x * x
        np.testing.assert_allclose(h.values, (1.0 - x.values) ** 2)
        assert (-h).max_abs() == pytest.approx(h.max_abs())

    def test_mixing_grids_raises(self, unit_grid, study_grid):
        with pytest.raises(GridMismatch):
            unit_grid.constant(1.0) + study_grid.constant(1.0)
        with pytest.raises(GridMismatch):
            check_same_grid(unit_grid.constant(1.0), study_grid.constant(1.0))

    def test_at_reproduces_bilinear_functions_between_midpoints(self, unit_grid):
        h = unit_grid.coordinate(0) + 2.0 * unit_grid.coordinate(1)
        pts = np.array([[0.3, 0.4], [0.51, 0.77]])
        np.testing.assert_allclose(h.at(pts), pts[:, 0] + 2.0 * pts[:, 1], atol=1e-12)

    def test_at_clamps_outside_midpoints(self, unit_grid):
        h = unit_grid.coordinate(0)
        assert h.at(np.array([[0.0, 0.5]]))[0] == pytest.approx(0.05)

    def test_to_frame_columns(self, unit_grid):
        frame = GridField(unit_grid, np.zeros(unit_grid.shape)).to_frame()
        assert list(frame.columns) == ["x1", "x2", "value"]
        assert len(frame) == unit_grid.size
