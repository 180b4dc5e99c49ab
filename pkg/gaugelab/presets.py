"""
Presets
-------

Named scenarios, parametrized by the node count per axis of the unit
square, so that any experiment can rebuild the same problem on every
grid of a refinement list.

>>> s = build("quadratic_bump", 33)
"""

from typing import Callable, Dict

import numpy as np

from gaugelab.exceptions import ConfigurationError
from gaugelab.forward import Scenario
from gaugelab.grid import BoundaryField, Field, Grid2D, laplacian, make_bump
from gaugelab.nonlinearity import Nonlinearity


class UnknownPreset(ConfigurationError):
    """Raised when a preset name is not registered."""


def laplace(n: int) -> Scenario:
    """``Δu = 0``."""
    grid = Grid2D(n)
    return Scenario(Nonlinearity.zero(grid), Field.zeros(grid), BoundaryField.zeros(grid), "laplace")


def manufactured_cubic(n: int) -> Scenario:
    """
    ``Δu - u³ = F`` with ``F`` computed from ``u* = sin(πx) sin(πy)`` by the
    discrete operator, so ``u*`` is the exact discrete solution for ``f = 0``.
    """
    grid = Grid2D(n)
    truth = Field.from_function(grid, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    zero = Field.zeros(grid)
    a = Nonlinearity.polynomial(zero, zero, Field.constant(grid, -1.0))
    return Scenario(a, laplacian(truth) - truth ** 3, BoundaryField.zeros(grid), "manufactured_cubic", truth)


def _source(grid: Grid2D) -> Field:
    return Field.from_function(grid, lambda x, y: np.sin(np.pi * x) * np.sin(2 * np.pi * y))


def quadratic_bump(n: int) -> Scenario:
    """``Δu + a1 u + a2 u² = F`` with bump coefficients and ``f0 ≡ 0.1``."""
    grid = Grid2D(n)
    a1 = make_bump(grid, (0.4, 0.5), 0.25, 1.0)
    a2 = make_bump(grid, (0.55, 0.5), 0.3, 2.0)
    return Scenario(Nonlinearity.polynomial(a1, a2), _source(grid), BoundaryField.constant(grid, 0.1),
                    "quadratic_bump")


def quadratic_positive(n: int) -> Scenario:
    """
    ``Δu + a1 u + a2 u² = F`` with a small ``a1`` bump, ``a2 = 1 + bump`` and
    ``f0 ≡ 0.5``. The top coefficient stays away from zero, which is what
    breaking the gauge with ``a1`` known divides by.
    """
    grid = Grid2D(n)
    a1 = make_bump(grid, (0.4, 0.5), 0.25, 0.3)
    a2 = 1.0 + make_bump(grid, (0.55, 0.5), 0.3, 1.0)
    return Scenario(Nonlinearity.polynomial(a1, a2), _source(grid), BoundaryField.constant(grid, 0.5),
                    "quadratic_positive")


def cubic_constant(n: int) -> Scenario:
    """``Δu + u³ = 0`` with ``f0 ≡ 0``; the base solution vanishes and ``T3 ≡ 6``."""
    grid = Grid2D(n)
    zero = Field.zeros(grid)
    a = Nonlinearity.polynomial(zero, zero, Field.constant(grid, 1.0))
    return Scenario(a, zero, BoundaryField.zeros(grid), "cubic_constant")


def exponential_bump(n: int) -> Scenario:
    """``Δu + q e^u = F`` with ``q = 0.5 + bump``; ``a(x, 0) = q`` does not vanish."""
    grid = Grid2D(n)
    q = 0.5 + make_bump(grid, (0.5, 0.5), 0.3, 0.5)
    return Scenario(Nonlinearity.exponential(q), _source(grid), BoundaryField.constant(grid, 0.1),
                    "exponential_bump")


def exp_times_u_bump(n: int) -> Scenario:
    """``Δu + q u e^u = 0`` with ``q = 1 + bump`` and ``f0 ≡ 0.2``."""
    grid = Grid2D(n)
    q = 1.0 + make_bump(grid, (0.5, 0.5), 0.3, 1.0)
    return Scenario(Nonlinearity.exp_times_u(q), Field.zeros(grid), BoundaryField.constant(grid, 0.2),
                    "exp_times_u_bump")


def sine_gordon_bump(n: int) -> Scenario:
    """``Δu + q sin u = F`` with ``q = 1 + bump`` and a small varying ``f0``."""
    grid = Grid2D(n)
    q = 1.0 + make_bump(grid, (0.5, 0.5), 0.3, 1.0)
    f0 = BoundaryField.from_function(grid, lambda x, y: 0.3 + 0.1 * x)
    return Scenario(Nonlinearity.sine_gordon(q), -_source(grid), f0, "sine_gordon_bump")


def linear_potential(n: int, amplitude: float = 5.0) -> Scenario:
    """``Δu + Q u = 0`` with ``Q`` a centered bump, the setting of potential recovery."""
    grid = Grid2D(n)
    q = make_bump(grid, (0.5, 0.5), 0.3, amplitude)
    return Scenario(Nonlinearity.linear(q), Field.zeros(grid), BoundaryField.zeros(grid), "linear_potential")


PRESETS: Dict[str, Callable[[int], Scenario]] = {
    "laplace": laplace,
    "manufactured_cubic": manufactured_cubic,
    "quadratic_bump": quadratic_bump,
    "quadratic_positive": quadratic_positive,
    "cubic_constant": cubic_constant,
    "exponential_bump": exponential_bump,
    "exp_times_u_bump": exp_times_u_bump,
    "sine_gordon_bump": sine_gordon_bump,
    "linear_potential": linear_potential,
}


def build(name: str, n: int) -> Scenario:
    """
    :raises UnknownPreset:
    """
    try:
        factory = PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"No preset named {name!r}; choose one of {', '.join(sorted(PRESETS))}.")
    return factory(n)
