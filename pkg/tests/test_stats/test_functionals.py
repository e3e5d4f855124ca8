"""
Tests for the sup, Cramer-von Mises and Anderson-Darling functionals
"""

import numpy as np
import pytest

from k2gof.errors import GridMismatch
from k2gof.process.projection import ProcessField, projected_process
from k2gof.quadrature.grid import GridField, partial_integral
from k2gof.stats.functionals import STAT_KINDS, StatTriple, stat_ad, stat_cvm, stat_sup, stat_triple


def _process(field, kind="projected-Q"):
    return ProcessField(field, 100, kind)


@pytest.fixture
def uniform(unit_grid):
    density = unit_grid.constant(1.0)
    return density, partial_integral(density, density)


class TestStatSup:
    """Test D = sup |v|"""

    def test_largest_absolute_value(self, unit_grid):
        values = np.zeros(unit_grid.shape)
        values[3, 4] = -2.5
        values[7, 1] = 1.5
        assert stat_sup(_process(GridField(unit_grid, values))) == 2.5

    def test_zero_process(self, unit_grid):
        assert stat_sup(_process(unit_grid.constant(0.0))) == 0.0


class TestStatCvm:
    """Test omega2 = integral of v^2 q"""

    def test_constant_process_under_uniform(self, unit_grid, uniform):
        density, _ = uniform
        assert stat_cvm(_process(unit_grid.constant(2.0)), density) == pytest.approx(4.0, abs=1e-12)

    def test_affine_square(self, unit_grid, uniform):
        density, _ = uniform
        v = _process(unit_grid.coordinate(0))
        # midpoint rule for x^2 on 10 cells: 1/3 - 1/1200
        assert stat_cvm(v, density) == pytest.approx(1.0 / 3.0 - 1.0 / 1200.0, abs=1e-12)

    def test_other_grid_rejected(self, unit_grid, study_grid):
        with pytest.raises(GridMismatch):
            stat_cvm(_process(unit_grid.constant(1.0)), study_grid.constant(1.0))


class TestStatAd:
    """Test A2 = integral of v^2 q / [Q (1 - Q)] with the clamp"""

    def test_matches_direct_sum_away_from_corners(self, unit_grid, uniform):
        density, cdf = uniform
        values = np.zeros(unit_grid.shape)
        values[4, 3] = 1.0
        q = cdf.values[4, 3]
        expected = 1.0 / (q * (1.0 - q)) * unit_grid.cell_weight
        assert stat_ad(_process(GridField(unit_grid, values)), density, cdf) == pytest.approx(expected, rel=1e-12)

    def test_clamped_nodes_with_negligible_process_contribute_nothing(self, unit_grid, uniform):
        density, cdf = uniform
        values = cdf.values.copy()
        values[-1, -1] = 1.0 - 1e-13
        cdf = GridField(unit_grid, values)
        v = np.zeros(unit_grid.shape)
        v[-1, -1] = 1e-11
        result = stat_ad(_process(GridField(unit_grid, v)), density, cdf)
        assert result == 0.0

    def test_clamp_keeps_result_finite(self, unit_grid, uniform):
        density, cdf = uniform
        v = _process(unit_grid.constant(0.5))
        result = stat_ad(v, density, cdf)
        assert np.isfinite(result)
        assert result > 0.0


class TestStatTriple:
    """Test the triple used by every simulation"""

    def test_all_three_and_kind(self, unit_grid, uniform):
        density, cdf = uniform
        triple = stat_triple(_process(unit_grid.constant(1.0), "rotated-F"), density, cdf)
        assert triple.kind == "rotated-F"
        assert triple["D"] == 1.0
        assert triple["omega2"] == pytest.approx(1.0)
        assert set(triple.as_dict()) == set(STAT_KINDS)

    def test_to_dict_includes_kind(self):
        triple = StatTriple(D=1.0, omega2=2.0, A2=3.0, kind="projected-Q")
        assert triple.to_dict() == {"D": 1.0, "omega2": 2.0, "A2": 3.0, "kind": "projected-Q"}

    def test_statistics_of_projected_process(self, q_plan, q_data):
        v = projected_process(q_data, q_plan)
        inst = q_plan.instance
        triple = stat_triple(v, inst.density_field, inst.cdf_table)
        assert triple.D > 0.0
        assert 0.0 < triple.omega2 < triple.A2
