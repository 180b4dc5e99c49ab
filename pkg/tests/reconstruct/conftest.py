import pytest

from gaugelab import presets
from gaugelab.forward import Scenario
from gaugelab.grid import BoundaryField, Field, fourier_family, make_bump
from gaugelab.nonlinearity import Nonlinearity
from gaugelab.reconstruct import generate_dataset


@pytest.fixture
def potential_scenario():
    return presets.linear_potential(17)


@pytest.fixture
def first_order_dataset(potential_scenario):
    return generate_dataset(potential_scenario, fourier_family(potential_scenario.grid, 8), order=1,
                            family="fourier")


@pytest.fixture
def resting_quadratic(grid):
    """``Δu + a1 u + a2 u² = 0`` at ``f0 = 0``, so that ``Q = a1`` and ``T2 = 2 a2``."""
    a1 = make_bump(grid, (0.4, 0.5), 0.25, 1.0)
    a2 = make_bump(grid, (0.55, 0.5), 0.3, 2.0)
    return Scenario(Nonlinearity.polynomial(a1, a2), Field.zeros(grid), BoundaryField.zeros(grid), "resting_quadratic")


@pytest.fixture
def second_order_dataset(resting_quadratic):
    return generate_dataset(resting_quadratic, fourier_family(resting_quadratic.grid, 8), order=2, family="fourier")
