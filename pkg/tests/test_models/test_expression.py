"""
Tests for user model expressions and model files
"""

import math

import numpy as np
import pytest

from k2gof.errors import InputError
from k2gof.models.base import instantiate, node_scores
from k2gof.models.expression import load_model_file, model_from_dict, parse_expression


class TestParseExpression:
    """Test the arithmetic expression compiler"""

    def test_evaluates_vectorized(self):
        fn = parse_expression("x1^2 + b1 * x2 - 1", d=2, p=1)
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_allclose(fn(np.array([0.5]), x), [1.0, 10.0])

    def test_functions_and_constants(self):
        fn = parse_expression("exp(-x1) * pow(x2, 2) / pi + log(b2)", d=2, p=2)
        x = np.array([[0.0, 3.0]])
        expected = 9.0 / math.pi + math.log(4.0)
        np.testing.assert_allclose(fn(np.array([1.0, 4.0]), x), [expected])

    def test_unary_minus(self):
        fn = parse_expression("-x1 + +x2", d=2, p=1)
        np.testing.assert_allclose(fn(np.zeros(1), np.array([[2.0, 5.0]])), [3.0])

    @pytest.mark.parametrize(
        "text",
        ["__import__('os').system('true')", "x1.real", "x1 if b1 else x2", "sin(x1)", "[x1]", "x1 +"],
    )
    def test_unsupported_source_rejected(self, text):
        with pytest.raises(InputError):
            parse_expression(text, d=2, p=1)

    def test_variable_out_of_range(self):
        with pytest.raises(InputError):
            parse_expression("x3", d=2, p=1)
        with pytest.raises(InputError):
            parse_expression("b2", d=2, p=1)

    def test_wrong_arity_rejected(self):
        with pytest.raises(InputError):
            parse_expression("pow(x1)", d=2, p=1)


class TestModelFromDict:
    """Test model file contents"""

    def _data(self, **changes):
        data = {
            "name": "Gauss",
            "d": 2,
            "support": {"lower": [1, 1], "upper": [20, 25]},
            "params": [{"name": "m", "domain": [None, None], "initial": 10.0}],
            "log_density": "-((x1 - b1)^2 + (x2 - b1)^2) / 40",
        }
        data.update(changes)
        return data

    def test_log_density_model_normalizes(self, study_grid):
        spec = model_from_dict(self._data())
        inst = instantiate(spec, (10.0,), study_grid)
        assert float(np.sum(inst.density_field.values) * study_grid.cell_weight) == pytest.approx(1.0, abs=1e-12)

    def test_finite_difference_score_has_mean_zero(self, study_grid):
        spec = model_from_dict(self._data())
        inst = instantiate(spec, (10.0,), study_grid)
        weights = inst.density_field.flat() * study_grid.cell_weight
        assert float(weights @ node_scores(inst)[:, 0]) == pytest.approx(0.0, abs=1e-6)

    def test_density_and_log_density_agree(self, study_grid):
        from_log = instantiate(model_from_dict(self._data()), (10.0,), study_grid)
        data = self._data(density="exp(-((x1 - b1)^2 + (x2 - b1)^2) / 40)")
        del data["log_density"]
        from_density = instantiate(model_from_dict(data), (10.0,), study_grid)
        np.testing.assert_allclose(from_density.density_field.values, from_log.density_field.values, rtol=1e-12)

    def test_default_initial_from_domain(self):
        data = self._data(params=[{"name": "r", "domain": [0, None]}, {"name": "c", "domain": [-2, 2]}])
        assert model_from_dict(data).initial_guess == (1.0, 0.0)

    def test_missing_density_rejected(self):
        data = self._data()
        del data["log_density"]
        with pytest.raises(InputError):
            model_from_dict(data)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InputError):
            model_from_dict(self._data(d=3))

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            load_model_file(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(InputError):
            load_model_file(path)
