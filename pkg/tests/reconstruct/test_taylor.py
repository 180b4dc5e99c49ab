import numpy as np
import pytest

from gaugelab import presets
from gaugelab.exceptions import ConfigurationError
from gaugelab.gauge import GaugeFunction, gauge_twin
from gaugelab.forward import solve
from gaugelab.grid import Field, fourier_family, make_bump
from gaugelab.linearize import LinearizedProblem
from gaugelab.reconstruct import (
    MissingOrder, RankDeficient, fit_second_field, fit_third_field, generate_dataset, integral_identity_certificate,
    recover_second_field, relative_l2_error,
)
from gaugelab.reconstruct import taylor


class TestIdentity:

    def test_discrete_identity_is_exact(self, second_order_dataset, resting_quadratic):
        """Assert that pairing a second order form with a test datum equals the weighted interior sum."""
        d = second_order_dataset
        adjoint = taylor._Adjoint(d, resting_quadratic.a.coefficient(1))
        t2 = 2 * resting_quadratic.a.coefficient(2).interior()
        for i, j in [(0, 0), (1, 3), (2, 5)]:
            pairing = adjoint.pairing(d.form(i, j))
            interior = adjoint.test_states @ (-t2 * adjoint.states[i] * adjoint.states[j])
            assert np.allclose(pairing, interior, rtol=1e-8, atol=1e-12)

    def test_test_fields(self, second_order_dataset, resting_quadratic):
        fields = taylor.test_functions(second_order_dataset, resting_quadratic.a.coefficient(1))
        assert len(fields) == 8
        assert all(f.grid == second_order_dataset.grid for f in fields)

    def test_certificate_for_gauge_pair(self, quadratic_scenario, fourier_inputs, grid):
        """Assert that a gauge pair passes the integral identity certificate and a different pair fails it."""
        twin = gauge_twin(quadratic_scenario, GaugeFunction(make_bump(grid, (0.5, 0.45), 0.3, 1.0)))
        certificate = integral_identity_certificate(twin, quadratic_scenario, fourier_inputs[:2], fourier_inputs[:2])
        assert len(certificate.boundary) == 3 * 2
        assert certificate.worst <= 1e-8

        a = quadratic_scenario.a
        other = quadratic_scenario.replace(a=a.with_coefficients([a.coefficient(1), 2 * a.coefficient(2)]))
        certificate = integral_identity_certificate(other, quadratic_scenario, fourier_inputs[:2], fourier_inputs[:2])
        assert max(certificate.interior) > 1e-6


class TestSecondField:

    def test_fits_the_data(self, second_order_dataset, resting_quadratic):
        fit = fit_second_field(second_order_dataset, resting_quadratic.a.coefficient(1), alpha_reg=1e-6)
        assert fit.relative_residual < 1e-2
        assert fit.coverage.max_norm() == pytest.approx(1.0)
        assert np.isfinite(fit.condition)

    def test_shortcut(self, second_order_dataset, resting_quadratic):
        Q = resting_quadratic.a.coefficient(1)
        assert np.array_equal(recover_second_field(second_order_dataset, Q, 1e-6).values,
                              fit_second_field(second_order_dataset, Q, 1e-6).field.values)

    def test_needs_second_order(self, first_order_dataset, potential_scenario):
        with pytest.raises(MissingOrder):
            fit_second_field(first_order_dataset, potential_scenario.a.coefficient(1))

    def test_positive_weight(self, second_order_dataset, resting_quadratic):
        with pytest.raises(ConfigurationError):
            fit_second_field(second_order_dataset, resting_quadratic.a.coefficient(1), alpha_reg=0.0)

    def test_rank_deficient(self, resting_quadratic):
        """Assert that one datum cannot pin down a whole field without regularization."""
        d = generate_dataset(resting_quadratic, fourier_family(resting_quadratic.grid, 2)[1:], order=2)
        with pytest.raises(RankDeficient):
            fit_second_field(d, resting_quadratic.a.coefficient(1), alpha_reg=1e-20)


class TestThirdField:

    @pytest.fixture
    def cubic(self):
        return presets.cubic_constant(17)

    @pytest.fixture
    def third_order_dataset(self, cubic):
        return generate_dataset(cubic, fourier_family(cubic.grid, 4), order=3)

    def test_fits_the_data(self, cubic, third_order_dataset):
        zero = Field.zeros(cubic.grid)
        fit = fit_third_field(third_order_dataset, zero, zero, alpha_reg=1e-6)
        assert fit.relative_residual < 1e-2

    def test_needs_third_order(self, second_order_dataset, resting_quadratic):
        Q = resting_quadratic.a.coefficient(1)
        with pytest.raises(MissingOrder):
            fit_third_field(second_order_dataset, Q, Q)

    def test_weight_is_relative(self, cubic, third_order_dataset):
        """Assert that doubling the inputs, and so the forms eightfold, leaves the fit unchanged."""
        d = third_order_dataset
        zero = Field.zeros(cubic.grid)
        louder = d._replace(inputs=[2.0 * f for f in d.inputs],
                            third={key: 8.0 * form for key, form in d.third.items()})
        quiet = fit_third_field(d, zero, zero).field
        assert np.allclose(fit_third_field(louder, zero, zero).field.values, quiet.values, rtol=1e-6,
                           atol=1e-8 * quiet.max_norm())

    def test_negated_forms_negate_the_fit(self, cubic, third_order_dataset):
        d = third_order_dataset
        zero = Field.zeros(cubic.grid)
        flipped = d._replace(third={key: -form for key, form in d.third.items()})
        fit = fit_third_field(d, zero, zero).field
        assert np.allclose(fit_third_field(flipped, zero, zero).field.values, -fit.values, rtol=1e-8,
                           atol=1e-10 * fit.max_norm())


@pytest.mark.slow
class TestAccuracy:

    def test_second_field(self):
        """Assert that ``T2`` of the quadratic bump scenario is recovered within 15% at the default weight."""
        s = presets.quadratic_bump(33)
        taylor_fields = LinearizedProblem(s, solve(s, s.f0)[0]).taylor
        d = generate_dataset(s, fourier_family(s.grid, 16), order=2, family="fourier")
        fit = fit_second_field(d, taylor_fields[0])
        assert relative_l2_error(fit.field, taylor_fields[1]) <= 0.15

    def test_third_field(self):
        """Assert that the cubic coefficient is recovered within 15% from six inputs."""
        s = presets.cubic_constant(33)
        zero = Field.zeros(s.grid)
        d = generate_dataset(s, fourier_family(s.grid, 6), order=3, family="fourier")
        fit = fit_third_field(d, zero, zero)
        assert relative_l2_error(fit.field / 6.0, Field.constant(s.grid, 1.0)) <= 0.15
