"""
Tests for the model abstraction: domains, normalization, scores, sampling
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from k2gof.errors import InputError, NonFiniteDensity, OutOfSupport, RejectionStall, SupportMismatch, ZeroMass
from k2gof.models.base import (
    POSITIVE,
    REAL,
    ModelSpec,
    ParamDomain,
    ParamVector,
    difference_points,
    instantiate,
    log_normalizer,
    node_scores,
    sample,
    score,
)
from k2gof.simulation.rng import RngStream


def _flat_spec(rect, log_value=0.0):
    return ModelSpec(
        name="Flat",
        support=rect,
        labels=("a",),
        domains=(REAL,),
        initial_guess=(0.0,),
        log_density_unnormalized=lambda theta, x: np.full(x.shape[0], log_value),
    )


class TestParamDomain:
    """Test parameter domains and their unconstrained transforms"""

    @pytest.mark.parametrize(
        "domain,value",
        [(REAL, -3.5), (POSITIVE, 22.0), (ParamDomain(-2.0, 2.0), 0.5), (ParamDomain(-math.inf, 1.0), -4.0)],
    )
    def test_transform_inverts(self, domain, value):
        z = domain.to_unconstrained(value)
        assert domain.from_unconstrained(z) == pytest.approx(value, rel=1e-12)

    def test_bounded_transform_stays_inside(self):
        domain = ParamDomain(-2.0, 2.0)
        assert domain.contains(domain.from_unconstrained(30.0))
        assert domain.contains(domain.from_unconstrained(-30.0))

    def test_contains_is_open_and_finite(self):
        assert not POSITIVE.contains(0.0)
        assert not REAL.contains(float("nan"))
        assert POSITIVE.contains(1e-9)

    def test_empty_domain_rejected(self):
        with pytest.raises(InputError):
            ParamDomain(1.0, 1.0)


class TestParamVector:
    """Test labelled parameter vectors"""

    def test_to_dict_keeps_labels(self):
        params = ParamVector((1, 2.5), ("mu1", "mu2"))
        assert params.to_dict() == {"mu1": 1.0, "mu2": 2.5}
        assert params.p == 2

    def test_label_count_must_match(self):
        with pytest.raises(InputError):
            ParamVector((1.0,), ("a", "b"))

    def test_non_finite_rejected(self):
        with pytest.raises(InputError):
            ParamVector((float("inf"),), ("a",))


class TestModelSpec:
    """Test parameter validation on a model spec"""

    def test_params_outside_domain_rejected(self, registry):
        with pytest.raises(InputError) as exc_info:
            registry["Q"].params((0.0, 0.0, -1.0))
        assert "theta3" in str(exc_info.value)

    def test_wrong_parameter_count_rejected(self, registry):
        with pytest.raises(InputError):
            registry["F1"].params((1.0, 1.0))

    def test_score_mode(self, registry):
        assert registry["Q"].score_mode == "analytic"
        assert replace(registry["Q"], gradient=None).score_mode == "finite-difference"


class TestInstantiate:
    """Test grid normalization of a model"""

    @pytest.mark.parametrize("name", ["Q", "P", "F1", "F2", "F3"])
    def test_density_integrates_to_one(self, registry, study_grid, name):
        spec = registry[name]
        inst = instantiate(spec, spec.default_params(), study_grid)
        total = float(np.sum(inst.density_field.values) * study_grid.cell_weight)
        assert total == pytest.approx(1.0, abs=1e-12)
        assert inst.cdf_table.values[-1, -1] == pytest.approx(1.0, abs=1e-12)

    def test_cdf_is_monotone(self, q_instance):
        cdf = q_instance.cdf_table.values
        assert np.all(np.diff(cdf, axis=0) >= -1e-15)
        assert np.all(np.diff(cdf, axis=1) >= -1e-15)

    def test_log_density_matches_density_field(self, q_instance, study_grid):
        nodes = study_grid.nodes()[:5]
        np.testing.assert_allclose(q_instance.density(nodes), q_instance.density_field.flat()[:5], rtol=1e-12)

    def test_grid_over_other_region_rejected(self, registry, unit_grid):
        spec = registry["Q"]
        with pytest.raises(SupportMismatch):
            instantiate(spec, spec.default_params(), unit_grid)

    def test_non_finite_density_rejected(self, unit_grid):
        spec = replace(
            _flat_spec(unit_grid.rect),
            log_density_unnormalized=lambda theta, x: np.log(x[:, 0] - 0.5),
        )
        with pytest.raises(NonFiniteDensity):
            instantiate(spec, (0.0,), unit_grid)

    def test_vanishing_mass_rejected(self, unit_grid):
        with pytest.raises(ZeroMass):
            log_normalizer(_flat_spec(unit_grid.rect, log_value=-1e6), np.zeros(1), unit_grid)

    def test_cauchy_with_non_positive_scale_is_non_finite(self, registry, study_grid):
        with np.errstate(invalid="ignore"):
            with pytest.raises(NonFiniteDensity):
                log_normalizer(registry["F2"], np.array([5.0, 6.0, -1.0]), study_grid)


class TestDifferencePoints:
    """Test finite-difference neighbours near domain bounds"""

    def _spec(self, rect, domain, value):
        return replace(_flat_spec(rect), domains=(domain,), initial_guess=(value,))

    def test_interior_step_is_relative(self, unit_grid):
        spec = self._spec(unit_grid.rect, REAL, 3.0)
        up, down, step = difference_points(spec, np.array([3.0]), 0)
        assert step == pytest.approx(3e-5)
        assert up[0] - 3.0 == pytest.approx(3.0 - down[0])

    @pytest.mark.parametrize(
        "domain,value",
        [(POSITIVE, 1e-7), (ParamDomain(-2.0, 2.0), 2.0 - 1e-8), (ParamDomain(-2.0, 2.0), -2.0 + 1e-8)],
    )
    def test_neighbours_stay_inside_domain(self, unit_grid, domain, value):
        spec = self._spec(unit_grid.rect, domain, value)
        up, down, step = difference_points(spec, np.array([value]), 0)
        assert step > 0.0
        assert domain.contains(up[0])
        assert domain.contains(down[0])
        assert up[0] - value == pytest.approx(value - down[0])

    def test_other_components_untouched(self, registry):
        theta = np.array([5.0, 6.0, 1e-7])
        up, down, _ = difference_points(registry["F2"], theta, 2)
        np.testing.assert_array_equal(up[:2], theta[:2])
        np.testing.assert_array_equal(down[:2], theta[:2])
        assert down[2] > 0.0


class TestScore:
    """Test analytic and finite-difference scores"""

    @pytest.mark.parametrize("name", ["Q", "P", "F1", "F2", "F3"])
    def test_score_has_mean_zero(self, registry, study_grid, name):
        spec = registry[name]
        inst = instantiate(spec, spec.default_params(), study_grid)
        u = node_scores(inst)
        weights = inst.density_field.flat() * study_grid.cell_weight
        np.testing.assert_allclose(weights @ u, 0.0, atol=1e-10)

    @pytest.mark.parametrize("name", ["Q", "F1", "F2", "F3"])
    def test_analytic_score_matches_finite_differences(self, registry, study_grid, name):
        spec = registry[name]
        inst = instantiate(spec, spec.default_params(), study_grid)
        fd_inst = instantiate(replace(spec, gradient=None), spec.default_params(), study_grid)
        pts = study_grid.nodes()[::97]
        analytic = score(inst, pts)
        numeric = score(fd_inst, pts)
        scale = max(1.0, float(np.max(np.abs(analytic))))
        np.testing.assert_allclose(numeric, analytic, atol=1e-5 * scale)

    def test_single_point_returns_vector(self, q_instance):
        assert score(q_instance, np.array([5.0, 5.0])).shape == (3,)
        assert score(q_instance, np.array([[5.0, 5.0], [6.0, 7.0]])).shape == (2, 3)

    def test_point_outside_support_raises(self, q_instance):
        with pytest.raises(OutOfSupport):
            score(q_instance, np.array([[5.0, 5.0], [0.5, 5.0]]))


class TestSample:
    """Test truncated rejection sampling"""

    def test_points_lie_in_support(self, q_instance):
        pts = sample(q_instance, 500, RngStream(1, 0))
        assert pts.shape == (500, 2)
        assert q_instance.spec.support.contains(pts).all()

    def test_same_stream_same_points(self, q_instance):
        a = sample(q_instance, 50, RngStream(1, 3))
        b = sample(q_instance, 50, RngStream(1, 3))
        c = sample(q_instance, 50, RngStream(1, 4))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_sample_mean_matches_quadrature_mean(self, q_instance):
        pts = sample(q_instance, 5000, RngStream(2, 0))
        for k in range(2):
            assert pts[:, k].mean() == pytest.approx(q_instance.mean(k), abs=0.3)

    def test_envelope_sampler_without_base_sampler(self, q_instance, study_grid):
        spec = replace(q_instance.spec, base_sampler=None)
        inst = instantiate(spec, spec.default_params(), study_grid)
        pts = sample(inst, 2000, RngStream(3, 0))
        assert spec.support.contains(pts).all()
        assert pts[:, 0].mean() == pytest.approx(inst.mean(0), abs=0.4)

    def test_stalled_sampler_raises(self, q_instance, study_grid):
        spec = replace(
            q_instance.spec,
            base_sampler=lambda theta, gen, size: np.full((size, 2), -100.0),
        )
        inst = instantiate(spec, spec.default_params(), study_grid)
        with pytest.raises(RejectionStall):
            sample(inst, 10, RngStream(4, 0))

    def test_accepts_numpy_generator(self, q_instance):
        pts = sample(q_instance, 20, np.random.default_rng(0))
        assert pts.shape == (20, 2)

    def test_non_positive_size_rejected(self, q_instance):
        with pytest.raises(InputError):
            sample(q_instance, 0, RngStream(1, 0))
