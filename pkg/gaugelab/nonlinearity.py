"""
Nonlinearity
------------

The four families of nonlinear terms ``a(x, z)`` the lab works with:

- polynomial ``Σ_{k=1}^N a_k(x) z^k``,
- exponential ``q(x) e^z``,
- exponential times the unknown ``q(x) z e^z``,
- sine-Gordon ``q(x) sin z``.

Every coefficient is a :class:`~gaugelab.grid.Field`; constants are
constant fields. All families except the exponential one vanish at ``z = 0``.
Values and z-derivatives of every order are exact and vectorized.

.. code-block:: python

    a = Nonlinearity.polynomial(Field.constant(grid, 1.0), Field.constant(grid, 2.0))
    a.eval((3, 3), 3.0)          # 21.0
    a.taylor_fields(u0, kmax=3)  # [T1, T2, T3]
"""

from enum import Enum
from math import perm
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from gaugelab.exceptions import ConfigurationError
from gaugelab.grid import Field, Grid2D, GridMismatch


class NonlinearityKind(str, Enum):
    POLYNOMIAL = "polynomial"
    EXPONENTIAL = "exponential"
    EXP_TIMES_U = "exp_times_u"
    SINE_GORDON = "sine_gordon"


class InvalidNonlinearity(ConfigurationError):
    """Raised when a nonlinearity has the wrong number of coefficients."""


Node = Tuple[int, int]
Values = Union[float, np.ndarray]


class Nonlinearity:
    """An immutable, tagged nonlinear term ``a(x, z)``."""

    __slots__ = ("kind", "coefficients")

    def __init__(self, kind: NonlinearityKind, coefficients: Sequence[Field]):
        kind = NonlinearityKind(kind)
        coefficients = tuple(coefficients)
        if not coefficients:
            raise InvalidNonlinearity(f"A {kind.value} nonlinearity needs at least one coefficient.")
        if kind is not NonlinearityKind.POLYNOMIAL and len(coefficients) != 1:
            raise InvalidNonlinearity(f"A {kind.value} nonlinearity takes one coefficient, got {len(coefficients)}.")
        grid = coefficients[0].grid
        if any(c.grid != grid for c in coefficients):
            raise GridMismatch("All coefficients of a nonlinearity must live on one grid.")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "coefficients", coefficients)

    def __setattr__(self, key, value):
        raise AttributeError("Nonlinearity is immutable.")

    @classmethod
    def polynomial(cls, *coefficients: Field) -> "Nonlinearity":
        """Builds ``Σ a_k z^k`` from ``a_1, ..., a_N``."""
        return cls(NonlinearityKind.POLYNOMIAL, coefficients)

    @classmethod
    def linear(cls, q: Field) -> "Nonlinearity":
        return cls.polynomial(q)

    @classmethod
    def zero(cls, grid: Grid2D) -> "Nonlinearity":
        return cls.polynomial(Field.zeros(grid))

    @classmethod
    def exponential(cls, q: Field) -> "Nonlinearity":
        return cls(NonlinearityKind.EXPONENTIAL, (q,))

    @classmethod
    def exp_times_u(cls, q: Field) -> "Nonlinearity":
        return cls(NonlinearityKind.EXP_TIMES_U, (q,))

    @classmethod
    def sine_gordon(cls, q: Field) -> "Nonlinearity":
        return cls(NonlinearityKind.SINE_GORDON, (q,))

    @property
    def grid(self) -> Grid2D:
        return self.coefficients[0].grid

    @property
    def degree(self) -> Optional[int]:
        """The polynomial degree ``N``, or ``None`` for the transcendental families."""
        return len(self.coefficients) if self.kind is NonlinearityKind.POLYNOMIAL else None

    @property
    def q(self) -> Field:
        """The single coefficient of the exponential and sine-Gordon families."""
        if self.kind is NonlinearityKind.POLYNOMIAL:
            raise InvalidNonlinearity("Polynomial nonlinearities have no q coefficient.")
        return self.coefficients[0]

    def coefficient(self, k: int) -> Field:
        """``a_k`` of a polynomial; zero above the degree."""
        if self.kind is not NonlinearityKind.POLYNOMIAL:
            raise InvalidNonlinearity(f"A {self.kind.value} nonlinearity has no a_{k}.")
        if k < 1:
            raise IndexError("Polynomial coefficients start at a_1.")
        if k > len(self.coefficients):
            return Field.zeros(self.grid)
        return self.coefficients[k - 1]

    def is_linear(self) -> bool:
        """True when every z-derivative above the first vanishes identically."""
        return self.kind is NonlinearityKind.POLYNOMIAL and all(
            not np.any(c.values) for c in self.coefficients[1:]
        )

    def _derivative(self, coefficients: Sequence[Values], z: Values, k: int) -> Values:
        if self.kind is NonlinearityKind.POLYNOMIAL:
            total = np.zeros_like(np.asarray(z, dtype=float))
            for m, a_m in enumerate(coefficients, start=1):
                if m >= k:
                    total = total + perm(m, k) * a_m * z ** (m - k)
            return total

        q = coefficients[0]
        if self.kind is NonlinearityKind.EXPONENTIAL:
            return q * np.exp(z)
        if self.kind is NonlinearityKind.EXP_TIMES_U:
            return q * (z + k) * np.exp(z)
        # sin(z + kπ/2) through the four-cycle, so that sin z and cos z stay exact
        cycle = (np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t))
        return q * cycle[k % 4](z)

    def eval(self, node: Node, z: float) -> float:
        """``a(x, z)`` at a single grid node."""
        return self.dz(0, node, z)

    def dz(self, k: int, node: Node, z: float) -> float:
        """``∂_z^k a(x, z)`` at a single grid node; ``k = 0`` is the value."""
        if k < 0:
            raise ValueError("Derivative order must be non-negative.")
        i, j = node
        return float(self._derivative([c.values[i, j] for c in self.coefficients], z, k))

    def evaluate(self, u: Field) -> Field:
        """``a(x, u(x))`` at every node."""
        return self.derivative(u, 0)

    def derivative(self, u: Field, k: int) -> Field:
        """``∂_z^k a(x, u(x))`` at every node."""
        if u.grid != self.grid:
            raise GridMismatch(f"Field on {u.grid} does not match nonlinearity on {self.grid}.")
        if k < 0:
            raise ValueError("Derivative order must be non-negative.")
        return Field(self.grid, self._derivative([c.values for c in self.coefficients], u.values, k))

    def interior_derivative(self, z: np.ndarray, k: int) -> np.ndarray:
        """
        ``∂_z^k a`` for a vector of interior unknowns, without building a Field.
        Overflow shows up as non-finite entries instead of an exception.
        """
        coefficients = [c.values[1:-1, 1:-1].ravel() for c in self.coefficients]
        with np.errstate(over="ignore", invalid="ignore"):
            return np.asarray(self._derivative(coefficients, z, k), dtype=float)

    def taylor_fields(self, u0: Field, kmax: int) -> List[Field]:
        """The Taylor fields ``T_k = ∂_z^k a(x, u0(x))`` for ``k = 1..kmax``."""
        if kmax < 1:
            raise ValueError("kmax must be at least 1.")
        return [self.derivative(u0, k) for k in range(1, kmax + 1)]

    def with_coefficients(self, coefficients: Sequence[Field]) -> "Nonlinearity":
        return Nonlinearity(self.kind, coefficients)

    def __repr__(self):
        return f"Nonlinearity({self.kind.value}, {len(self.coefficients)} coefficient(s) on {self.grid})"


def dz(a: Nonlinearity, k: int, node: Node, z: float) -> float:
    return a.dz(k, node, z)


def taylor_fields(a: Nonlinearity, u0: Field, kmax: int) -> List[Field]:
    return a.taylor_fields(u0, kmax)
