import numpy as np
import pytest

from gaugelab import presets
from gaugelab.exceptions import ConfigurationError
from gaugelab.forward import Scenario, SingularJacobian, harmonic_extension, solution_map, solve
from gaugelab.grid import (
    BoundaryField, Field, Grid2D, GridMismatch, boundary_integrate, fourier_family, make_bump, normal_derivative,
)
from gaugelab.linearize import (
    ExtractionMethod, InvalidOrder, LinearizedProblem, StepTooSmall, direct_form, kth_divided_difference,
    linearized_solve, second_order_solve, third_order_solve, verify_linearization,
)
from gaugelab.nonlinearity import Nonlinearity


@pytest.fixture
def resting_quadratic(grid):
    """A quadratic scenario whose base solution is zero, so ``T1 = a1`` and ``T2 = 2 a2``."""

    def build(sign: float = 1.0) -> Scenario:
        a1 = make_bump(grid, (0.4, 0.5), 0.25, 1.0)
        a2 = make_bump(grid, (0.55, 0.5), 0.3, 2.0)
        return Scenario(Nonlinearity.polynomial(a1, sign * a2), Field.zeros(grid), BoundaryField.zeros(grid))

    return build


class TestHierarchy:

    def test_first_order_of_laplace_is_harmonic(self, laplace_scenario, fourier_inputs, grid):
        """Assert that with a = 0 the first form is the DN map of the harmonic extension."""
        f = fourier_inputs[1]
        form = direct_form(laplace_scenario, BoundaryField.zeros(grid), [f])
        assert form.order == 1
        assert form.method is ExtractionMethod.DIRECT_SOLVE
        assert np.allclose(form.value.values, normal_derivative(harmonic_extension(f)).values)

    def test_potential_at_rest(self, resting_quadratic, grid):
        s = resting_quadratic()
        problem = LinearizedProblem(s, Field.zeros(grid))
        assert np.allclose(problem.potential.values, s.a.coefficient(1).values)
        assert np.allclose(problem.taylor[1].values, 2 * s.a.coefficient(2).values)

    def test_first_order_keeps_trace(self, quadratic_scenario, fourier_inputs):
        u0, _ = solve(quadratic_scenario)
        v = linearized_solve(quadratic_scenario, u0, fourier_inputs[2])
        assert np.array_equal(v.trace().values, fourier_inputs[2].values)

    def test_higher_orders_have_zero_trace(self, quadratic_scenario, fourier_inputs):
        u0, _ = solve(quadratic_scenario)
        v = [linearized_solve(quadratic_scenario, u0, f) for f in fourier_inputs[1:4]]
        w12 = second_order_solve(quadratic_scenario, u0, v[0], v[1])
        w13 = second_order_solve(quadratic_scenario, u0, v[0], v[2])
        w23 = second_order_solve(quadratic_scenario, u0, v[1], v[2])
        w123 = third_order_solve(quadratic_scenario, u0, *v, w12, w13, w23)
        assert w12.trace().max_norm() == 0
        assert w123.trace().max_norm() == 0
        assert w12.max_norm() > 0

    def test_linear_forms_vanish(self, fourier_inputs, grid):
        """Assert that a linear equation has no second order linearization either way."""
        s = presets.linear_potential(17)
        inputs = fourier_inputs[1:3]
        assert direct_form(s, s.f0, inputs).value.max_norm() == 0
        assert kth_divided_difference(s, s.f0, inputs, 0.1).value.max_norm() <= 1e-6

    def test_sign_flip(self, resting_quadratic, fourier_inputs, grid):
        """Assert that flipping the sign of the quadratic coefficient flips the second form exactly."""
        inputs = fourier_inputs[1:3]
        zero = Field.zeros(grid)
        positive = direct_form(resting_quadratic(1.0), BoundaryField.zeros(grid), inputs, u0=zero)
        negative = direct_form(resting_quadratic(-1.0), BoundaryField.zeros(grid), inputs, u0=zero)
        assert positive.value.max_norm() > 0
        assert np.allclose(negative.value.values, -positive.value.values, rtol=0, atol=1e-13)

    def test_second_form_symmetric(self, quadratic_scenario, fourier_inputs):
        f1, f2 = fourier_inputs[1], fourier_inputs[3]
        forward = direct_form(quadratic_scenario, quadratic_scenario.f0, [f1, f2])
        backward = direct_form(quadratic_scenario, quadratic_scenario.f0, [f2, f1])
        assert np.allclose(forward.value.values, backward.value.values, rtol=0, atol=1e-12)

    def test_third_form_symmetric(self, quadratic_scenario, fourier_inputs):
        """Assert that the third order source does not depend on the order of the inputs."""
        f1, f2, f3 = fourier_inputs[1:4]
        u0, _ = solve(quadratic_scenario)
        problem = LinearizedProblem(quadratic_scenario, u0)
        first = direct_form(quadratic_scenario, quadratic_scenario.f0, [f1, f2, f3], problem=problem)
        second = direct_form(quadratic_scenario, quadratic_scenario.f0, [f3, f1, f2], problem=problem)
        assert first.order == 3
        assert np.allclose(first.value.values, second.value.values, rtol=0, atol=1e-12)

    def test_cubic_third_form(self, fourier_inputs):
        """Assert that for Δu + u³ = 0 at rest the third order source is -6 v1 v2 v3."""
        s = presets.cubic_constant(17)
        zero = Field.zeros(s.grid)
        problem = LinearizedProblem(s, zero)
        v = [problem.first(f) for f in fourier_inputs[1:4]]
        expected = problem.solve(-6.0 * v[0] * v[1] * v[2], BoundaryField.zeros(s.grid))
        form = direct_form(s, s.f0, fourier_inputs[1:4], u0=zero)
        assert np.allclose(form.value.values, normal_derivative(expected).values)

    def test_base_solution_grid(self, quadratic_scenario):
        with pytest.raises(GridMismatch):
            LinearizedProblem(quadratic_scenario, Field.zeros(Grid2D(9)))


class TestDividedDifference:

    def test_order_limits(self, quadratic_scenario, fourier_inputs):
        with pytest.raises(InvalidOrder):
            direct_form(quadratic_scenario, quadratic_scenario.f0, fourier_inputs[:4])
        with pytest.raises(InvalidOrder):
            kth_divided_difference(quadratic_scenario, quadratic_scenario.f0, [])

    def test_step_must_be_positive(self, quadratic_scenario, fourier_inputs):
        with pytest.raises(ConfigurationError):
            kth_divided_difference(quadratic_scenario, quadratic_scenario.f0, fourier_inputs[1:2], 0.0)

    def test_inputs_on_scenario_grid(self, quadratic_scenario):
        with pytest.raises(GridMismatch):
            kth_divided_difference(quadratic_scenario, quadratic_scenario.f0, [BoundaryField.zeros(Grid2D(9))])

    def test_symmetric_to_the_bit(self, quadratic_scenario, fourier_inputs):
        """Assert that permuting the inputs gives a bitwise identical estimate."""
        f1, f2 = fourier_inputs[1], fourier_inputs[2]
        forward = kth_divided_difference(quadratic_scenario, quadratic_scenario.f0, [f1, f2], 0.1)
        backward = kth_divided_difference(quadratic_scenario, quadratic_scenario.f0, [f2, f1], 0.1)
        assert forward.method is ExtractionMethod.DIVIDED_DIFFERENCE
        assert forward.epsilon == 0.1
        assert np.array_equal(forward.value.values, backward.value.values)

    def test_step_check_raises(self, quadratic_scenario, fourier_inputs, mocker):
        """Assert that estimates that move more than half their size on halving the step are rejected."""
        grid = quadratic_scenario.grid
        mocker.patch("gaugelab.linearize._divided_difference", side_effect=[
            BoundaryField.constant(grid, 1.0), BoundaryField.constant(grid, 10.0),
        ])
        with pytest.raises(StepTooSmall):
            kth_divided_difference(quadratic_scenario, quadratic_scenario.f0, fourier_inputs[1:3], check_step=True)

    def test_step_check_passes(self, quadratic_scenario, fourier_inputs, mocker):
        grid = quadratic_scenario.grid
        mocker.patch("gaugelab.linearize._divided_difference", side_effect=[
            BoundaryField.constant(grid, 1.0), BoundaryField.constant(grid, 1.1),
        ])
        form = kth_divided_difference(quadratic_scenario, quadratic_scenario.f0, fourier_inputs[1:3],
                                      check_step=True)
        assert np.allclose(form.value.values, 1.0)

    def test_first_order_agrees(self, quadratic_scenario, fourier_inputs):
        inputs = fourier_inputs[1:2]
        direct = direct_form(quadratic_scenario, quadratic_scenario.f0, inputs)
        divided = kth_divided_difference(quadratic_scenario, quadratic_scenario.f0, inputs, 1e-2)
        assert (direct.value - divided.value).max_norm() <= 1e-3 * direct.value.max_norm()


class TestVerification:

    def test_second_order_richardson(self, quadratic_scenario, fourier_inputs):
        """Assert that halving the step shrinks the second order gap about four times."""
        report = verify_linearization(quadratic_scenario, quadratic_scenario.f0, fourier_inputs[1:3], 0.1)
        assert not report.failures
        assert report.order == 2
        assert 3.0 < report.ratio < 5.0
        assert report.extrapolated_discrepancy < report.half_step_discrepancy

    def test_third_order_richardson(self, fourier_inputs):
        s = presets.cubic_constant(17)
        report = verify_linearization(s, s.f0, fourier_inputs[1:4], 0.1)
        assert not report.failures
        assert report.direct.value.max_norm() > 0
        assert 3.0 < report.ratio < 5.0

    def test_failures_are_recorded(self, quadratic_scenario, fourier_inputs, mocker):
        mocker.patch("gaugelab.linearize.direct_form", side_effect=SingularJacobian("forced"))
        report = verify_linearization(quadratic_scenario, quadratic_scenario.f0, fourier_inputs[1:3])
        assert report.failures == ["forced"]
        assert np.isnan(report.discrepancy)
        assert report.direct is None


def test_solution_map_is_smooth(quadratic_scenario, fourier_inputs):
    """Assert that central differences of the solution map converge to the first linearization at second order."""
    s = quadratic_scenario
    f = fourier_inputs[1]
    u = solution_map(s)
    v = linearized_solve(s, u(s.f0), f)
    errors = [((u(s.f0 + eps * f) - u(s.f0 - eps * f)) / (2 * eps) - v).max_norm() for eps in (0.1, 0.05)]
    assert 3.0 < errors[0] / errors[1] < 5.0


class TestWellPosedness:

    @staticmethod
    def resonant(grid: Grid2D, offset: float = 0.0) -> Scenario:
        """``Δu + λ u = 0`` with ``λ`` the lowest discrete Dirichlet eigenvalue, shifted by ``offset``."""
        lowest = 8 / grid.h ** 2 * np.sin(np.pi * grid.h / 2) ** 2
        a = Nonlinearity.linear(Field.constant(grid, lowest + offset))
        return Scenario(a, Field.zeros(grid), BoundaryField.zeros(grid), "resonant")

    def test_singular_linearization(self, grid, fourier_inputs):
        """Assert that a potential at the first eigenvalue is refused before any solve."""
        with pytest.raises(SingularJacobian):
            linearized_solve(self.resonant(grid), Field.zeros(grid), fourier_inputs[1])

    def test_higher_orders_check_too(self, grid):
        zero = Field.zeros(grid)
        with pytest.raises(SingularJacobian):
            second_order_solve(self.resonant(grid), zero, zero, zero)

    def test_nearby_potential_solves(self, grid, fourier_inputs):
        v = linearized_solve(self.resonant(grid, -0.5), Field.zeros(grid), fourier_inputs[1])
        assert np.array_equal(v.trace().values, fourier_inputs[1].values)


class TestFormProperties:

    def test_homogeneous_in_the_input(self, quadratic_scenario, fourier_inputs):
        """Assert that doubling the input doubles the first divided difference up to 10 ε²."""
        s, f, eps = quadratic_scenario, fourier_inputs[1], 1e-2
        single = kth_divided_difference(s, s.f0, [f], eps).value
        double = kth_divided_difference(s, s.f0, [2.0 * f], eps).value
        assert (double - 2.0 * single).max_norm() <= 10 * eps ** 2 * max(1.0, single.max_norm())

    def test_additive_in_each_input(self, quadratic_scenario, fourier_inputs):
        """Assert that the second divided difference splits over a sum in its first slot up to 10 ε²."""
        s, eps = quadratic_scenario, 1e-2
        f1, f2, g = fourier_inputs[1], fourier_inputs[2], fourier_inputs[3]
        summed = kth_divided_difference(s, s.f0, [f1 + f2, g], eps).value
        parts = (kth_divided_difference(s, s.f0, [f1, g], eps).value
                 + kth_divided_difference(s, s.f0, [f2, g], eps).value)
        assert (summed - parts).max_norm() <= 10 * eps ** 2 * max(1.0, parts.max_norm())

    def test_reciprocity(self):
        """Assert that ∫ g ∂_ν v_f and ∫ f ∂_ν v_g converge together under refinement."""
        def gap(n):
            s = presets.quadratic_bump(n)
            f, g = fourier_family(s.grid, 4)[1:3]
            problem = LinearizedProblem(s, solve(s)[0])
            forward = boundary_integrate(g * normal_derivative(problem.first(f)))
            backward = boundary_integrate(f * normal_derivative(problem.first(g)))
            scale = normal_derivative(problem.first(f)).max_norm() + normal_derivative(problem.first(g)).max_norm()
            return abs(forward - backward), scale

        coarse, scale = gap(17)
        fine, _ = gap(33)
        assert coarse <= 0.1 * scale
        assert fine <= max(0.6 * coarse, 1e-10)
