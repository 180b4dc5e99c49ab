import numpy as np
import pytest

from gaugelab import presets
from gaugelab.grid import BoundaryField, Field, Grid2D, fourier_family


@pytest.fixture
def grid():
    return Grid2D(17)


@pytest.fixture
def fine_grid():
    return Grid2D(33)


@pytest.fixture
def rectangle():
    """A non-square grid with distinct steps, to catch swapped axes."""
    return Grid2D(9, 13, lx=2.0, ly=1.5)


@pytest.fixture
def smooth_field(grid):
    return Field.from_function(grid, lambda x, y: np.sin(np.pi * x) * np.cos(y) + x * y)


@pytest.fixture
def laplace_scenario():
    return presets.laplace(17)


@pytest.fixture
def quadratic_scenario():
    return presets.quadratic_bump(17)


@pytest.fixture
def exponential_scenario():
    return presets.exponential_bump(17)


@pytest.fixture
def manufactured_scenario():
    return presets.manufactured_cubic(17)


@pytest.fixture
def fourier_inputs(grid):
    return fourier_family(grid, 4)


@pytest.fixture
def unit_trace(grid):
    return BoundaryField.constant(grid, 1.0)
