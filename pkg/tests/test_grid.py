import numpy as np
import pytest

from gaugelab.grid import (
    BoundaryField, BumpTooClose, Field, Grid2D, GridMismatch, InvalidGrid, NonFiniteValues, boundary_integrate,
    boundary_weights, bump_laplacian, fourier_family, gradient_penalty_matrix, hat_family, integrate, laplacian,
    laplacian_matrix, make_bump, normal_derivative, quadrature_weights,
)


class TestGrid:

    def test_too_few_nodes(self):
        """Assert that a grid needs at least five nodes per axis."""
        with pytest.raises(InvalidGrid):
            Grid2D(4)
        with pytest.raises(InvalidGrid):
            Grid2D(9, 3)

    def test_non_positive_side(self):
        with pytest.raises(InvalidGrid):
            Grid2D(9, lx=0.0)

    def test_steps(self, rectangle):
        assert rectangle.hx == pytest.approx(2.0 / 8)
        assert rectangle.hy == pytest.approx(1.5 / 12)
        assert rectangle.h == rectangle.hx
        assert rectangle.shape == (9, 13)
        assert rectangle.interior_count == 7 * 11
        assert rectangle.boundary_count == 2 * 9 + 2 * 13 - 4

    def test_equality_by_value(self):
        """Assert that independently built grids are interchangeable."""
        assert Grid2D(9) == Grid2D(9, 9, 1.0, 1.0)
        assert hash(Grid2D(9)) == hash(Grid2D(9))
        assert Grid2D(9) != Grid2D(11)

    def test_coordinates_use_matrix_indexing(self, rectangle):
        x, y = rectangle.coordinates()
        assert x.shape == rectangle.shape
        assert x[3, 0] == pytest.approx(3 * rectangle.hx)
        assert y[0, 5] == pytest.approx(5 * rectangle.hy)

    def test_boundary_traversal(self, rectangle):
        """Assert that the boundary is walked counterclockwise from the origin."""
        bi, bj = rectangle.boundary_nodes()
        nx, ny = rectangle.shape
        assert (bi[0], bj[0]) == (0, 0)
        assert (bi[nx - 1], bj[nx - 1]) == (nx - 1, 0)
        assert (bi[nx + ny - 2], bj[nx + ny - 2]) == (nx - 1, ny - 1)
        assert (bi[-1], bj[-1]) == (0, 1)
        assert len(set(zip(bi.tolist(), bj.tolist()))) == rectangle.boundary_count

    def test_boundary_index_maps(self, rectangle):
        for k in range(rectangle.boundary_count):
            assert rectangle.boundary_position(*rectangle.boundary_node(k)) == k
        with pytest.raises(IndexError):
            rectangle.boundary_position(3, 3)

    def test_interior_index_maps(self, rectangle):
        for k in range(rectangle.interior_count):
            assert rectangle.interior_to_flat(*rectangle.flat_to_interior(k)) == k
        assert rectangle.interior_to_flat(1, 1) == 0
        assert rectangle.interior_to_flat(2, 1) == rectangle.ny - 2
        with pytest.raises(IndexError):
            rectangle.interior_to_flat(0, 3)

    def test_arclength(self, rectangle):
        s = rectangle.boundary_arclength()
        assert s[0] == 0
        assert np.all(np.diff(s) > 0)
        assert s[rectangle.nx - 1] == pytest.approx(rectangle.lx)
        assert s[-1] == pytest.approx(rectangle.perimeter - rectangle.hy)


class TestFields:

    def test_immutable(self, smooth_field):
        with pytest.raises(AttributeError):
            smooth_field.values = np.zeros(smooth_field.grid.shape)
        with pytest.raises(ValueError):
            smooth_field.values[0, 0] = 1.0

    def test_non_finite(self, grid):
        values = np.zeros(grid.shape)
        values[3, 3] = np.nan
        with pytest.raises(NonFiniteValues):
            Field(grid, values)

    def test_wrong_size(self, grid):
        with pytest.raises(GridMismatch):
            Field(grid, np.zeros(10))

    def test_flat_values_are_reshaped(self, rectangle):
        flat = np.arange(rectangle.size, dtype=float)
        field = Field(rectangle, flat)
        assert field.values[2, 3] == 2 * rectangle.ny + 3

    def test_arithmetic(self, smooth_field):
        doubled = smooth_field + smooth_field
        assert np.allclose(doubled.values, 2 * smooth_field.values)
        assert np.allclose((doubled - smooth_field).values, smooth_field.values)
        assert np.allclose((1 - smooth_field).values, 1 - smooth_field.values)
        assert np.allclose((smooth_field ** 2).values, smooth_field.values ** 2)
        assert np.allclose((-smooth_field).values, -smooth_field.values)

    def test_mixed_grids(self, smooth_field):
        other = Field.zeros(Grid2D(9))
        with pytest.raises(GridMismatch):
            smooth_field + other

    def test_field_and_trace_do_not_mix(self, smooth_field):
        with pytest.raises(GridMismatch):
            smooth_field + smooth_field.trace()

    def test_trace_roundtrip(self, smooth_field):
        """Assert that replacing a trace with itself changes nothing."""
        rebuilt = smooth_field.with_trace(smooth_field.trace())
        assert np.array_equal(rebuilt.values, smooth_field.values)

    def test_from_interior_copies_nearest_ring(self, grid):
        interior = np.arange(grid.interior_count, dtype=float)
        field = Field.from_interior(grid, interior)
        assert np.array_equal(field.values[0, 1:-1], field.values[1, 1:-1])
        assert np.array_equal(field.values[1:-1, -1], field.values[1:-1, -2])
        assert field.values[0, 0] == field.values[1, 1]

    def test_extend_by_zero(self, unit_trace):
        field = unit_trace.extend_by_zero()
        assert np.all(field.values[1:-1, 1:-1] == 0)
        assert np.all(field.trace().values == 1)


class TestOperators:

    def test_laplacian_exact_on_quadratics(self, rectangle):
        u = Field.from_function(rectangle, lambda x, y: 3 * x ** 2 - y ** 2 + x * y)
        assert np.allclose(laplacian(u).values[1:-1, 1:-1], 4.0)
        assert np.all(laplacian(u).values[0, :] == 0)

    def test_matrix_matches_stencil(self, rectangle):
        """Assert that the sparse Laplacian agrees with the stencil for a zero trace."""
        x, y = rectangle.coordinates()
        u = Field(rectangle, np.sin(x) * np.cos(2 * y)).with_trace(BoundaryField.zeros(rectangle))
        assert np.allclose(laplacian_matrix(rectangle) @ u.interior(), laplacian(u).interior())

    def test_normal_derivative_of_linear(self):
        grid = Grid2D(9)
        g = normal_derivative(Field.from_function(grid, lambda x, y: x))
        bx, by = grid.boundary_coordinates()
        right = (bx == 1.0) & (by > 0) & (by < 1)
        left = (bx == 0.0) & (by > 0) & (by < 1)
        bottom = (by == 0.0) & (bx > 0) & (bx < 1)
        assert np.allclose(g.values[right], 1.0)
        assert np.allclose(g.values[left], -1.0)
        assert np.allclose(g.values[bottom], 0.0)

    def test_normal_derivative_corners_average(self):
        """Assert that a corner takes the mean of its two edge formulas."""
        grid = Grid2D(9)
        g = normal_derivative(Field.from_function(grid, lambda x, y: x))
        assert g.values[grid.boundary_position(0, 0)] == pytest.approx(-0.5)
        assert g.values[grid.boundary_position(8, 8)] == pytest.approx(0.5)

    def test_normal_derivative_exact_on_quadratics(self, rectangle):
        g = normal_derivative(Field.from_function(rectangle, lambda x, y: y ** 2))
        bx, by = rectangle.boundary_coordinates()
        top = (by == rectangle.ly) & (bx > 0) & (bx < rectangle.lx)
        assert np.allclose(g.values[top], 2 * rectangle.ly)

    def test_gradient_penalty_vanishes_on_constants(self, grid):
        penalty = gradient_penalty_matrix(grid)
        ones = np.ones(grid.interior_count)
        assert np.allclose(penalty @ ones, 0.0)
        random = np.random.default_rng(0).standard_normal(grid.interior_count)
        assert random @ penalty @ random > 0


class TestQuadrature:

    def test_area(self, rectangle):
        assert integrate(Field.constant(rectangle, 1.0)) == pytest.approx(3.0)
        assert quadrature_weights(rectangle).sum() == pytest.approx(3.0)

    def test_exact_on_bilinear(self, rectangle):
        assert integrate(Field.from_function(rectangle, lambda x, y: x * y)) == pytest.approx(2.0 * 1.125)

    def test_perimeter(self, rectangle):
        assert boundary_integrate(BoundaryField.constant(rectangle, 1.0)) == pytest.approx(7.0)
        assert boundary_weights(rectangle).sum() == pytest.approx(rectangle.perimeter)

    def test_boundary_exact_on_edgewise_linear(self):
        grid = Grid2D(11)
        g = BoundaryField.from_function(grid, lambda x, y: x)
        assert boundary_integrate(g) == pytest.approx(2.0)


class TestBumps:

    def test_vanishes_near_boundary(self, grid):
        """Assert that a bump is zero on the boundary and its first two rings."""
        bump = make_bump(grid, (0.5, 0.5), 0.3, 2.0)
        assert bump.values.max() == pytest.approx(2.0)
        assert np.all(bump.values[:3, :] == 0)
        assert np.all(bump.values[:, -3:] == 0)
        assert normal_derivative(bump).max_norm() == 0

    def test_too_close(self, grid):
        with pytest.raises(BumpTooClose):
            make_bump(grid, (0.2, 0.5), 0.15, 1.0)
        with pytest.raises(BumpTooClose):
            make_bump(grid, (0.5, 0.5), -0.1, 1.0)

    def test_exact_laplacian_matches_stencil(self):
        """Assert that the stencil converges to the closed form Laplacian."""
        errors = []
        for n in (33, 65):
            grid = Grid2D(n)
            exact = bump_laplacian(grid, (0.5, 0.5), 0.3, 1.0)
            errors.append((laplacian(make_bump(grid, (0.5, 0.5), 0.3, 1.0)) - exact).interior_max_norm()
                          / exact.max_norm())
        assert errors[1] < errors[0]
        assert errors[1] < 0.15


class TestFamilies:

    def test_fourier(self, grid):
        family = fourier_family(grid, 5)
        assert len(family) == 5
        assert np.all(family[0].values == 1)
        assert boundary_integrate(family[1]) == pytest.approx(0.0, abs=1e-12)
        assert boundary_integrate(family[1] * family[2]) == pytest.approx(0.0, abs=1e-12)

    def test_hats_partition_unity(self, rectangle):
        family = hat_family(rectangle, 6)
        total = sum(f.values for f in family)
        assert np.allclose(total, 1.0)
        assert all(f.values.max() <= 1.0 for f in family)


def _sine_mode(grid: Grid2D) -> Field:
    return Field.from_function(grid, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))


class TestConvergence:
    """Second order accuracy on ``sin(πx) sin(πy)``, checked by halving the step."""

    @staticmethod
    def ratio(error, sizes=(17, 33)):
        coarse, fine = (error(Grid2D(n)) for n in sizes)
        return coarse / fine

    def test_laplacian(self):
        def error(grid):
            u = _sine_mode(grid)
            return float(np.max(np.abs((laplacian(u) + 2 * np.pi ** 2 * u).values[1:-1, 1:-1])))

        assert error(Grid2D(65)) <= 2 * np.pi ** 4 / 12 / 64 ** 2
        assert 3.5 < self.ratio(error) < 4.5

    def test_normal_derivative(self):
        def error(grid):
            bx, by = grid.boundary_coordinates()
            along = np.where(np.isclose(bx, 0.0) | np.isclose(bx, 1.0), np.sin(np.pi * by), np.sin(np.pi * bx))
            return (normal_derivative(_sine_mode(grid)) - BoundaryField(grid, -np.pi * along)).max_norm()

        assert error(Grid2D(33)) <= np.pi ** 3 / 3 / 32 ** 2
        assert 3.5 < self.ratio(error) < 4.5

    def test_integrate(self):
        def error(grid):
            return abs(integrate(_sine_mode(grid)) - 4 / np.pi ** 2)

        assert error(Grid2D(33)) <= 1 / 32 ** 2
        assert 3.5 < self.ratio(error) < 4.5

    def test_green_identity(self):
        """Assert that ∫ (u Δv - v Δu) and ∫_∂ (u ∂_ν v - v ∂_ν u) agree to second order."""
        def gap(grid):
            u = _sine_mode(grid)
            v = Field.from_function(grid, lambda x, y: np.exp(x) * np.cos(y))
            interior = integrate(u * laplacian(v) - v * laplacian(u))
            boundary = boundary_integrate(u.trace() * normal_derivative(v) - v.trace() * normal_derivative(u))
            return abs(interior - boundary)

        assert gap(Grid2D(33)) <= 1e-2
        assert 3.0 < self.ratio(gap) < 5.0

    def test_divergence_theorem(self):
        u = _sine_mode(Grid2D(33))
        assert integrate(laplacian(u)) == pytest.approx(boundary_integrate(normal_derivative(u)), rel=1e-2)
        assert boundary_integrate(normal_derivative(u)) == pytest.approx(-8.0, rel=1e-2)


@pytest.mark.parametrize("grid", [Grid2D(17), Grid2D(9, 13, lx=2.0, ly=1.5)], ids=["square", "rectangle"])
def test_antisymmetric_trace_integrates_to_zero(grid):
    """Assert that a trace odd under reflection through the center integrates to round-off."""
    cx, cy = grid.lx / 2, grid.ly / 2
    g = BoundaryField.from_function(grid, lambda x, y: (x - cx) ** 3 + np.sin(y - cy) * np.cos(x - cx))
    assert abs(boundary_integrate(g)) <= 1e-13
