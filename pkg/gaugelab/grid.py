"""
Grid
----

The discrete rectangle ``[0, lx] x [0, ly]`` standing in for the smooth
domain, the grid functions living on it, and the finite difference
operators and quadratures everything else is built from.

Node layout
===========

Nodal values are stored as arrays of shape ``(nx, ny)`` with
``values[i, j] = u(x_i, y_j)``, ``x_i = i * hx`` and ``y_j = j * hy``.
Flattened arrays are row-major over that layout (flat index ``i * ny + j``).
Interior unknowns are the block ``1 <= i <= nx - 2``, ``1 <= j <= ny - 2``,
flattened the same way.

Boundary traversal
==================

Boundary nodes are visited counterclockwise starting at the origin corner:
the bottom edge left to right, the right edge upwards, the top edge right
to left and the left edge downwards. A :class:`BoundaryField` stores one
value per boundary node in that order.

.. note:: The rectangle has corners, the smooth domain does not. The outward
    normal derivative at a corner is the average of the two adjacent edge
    formulas; treat corner values as a modelling convention.
"""

from functools import lru_cache
from typing import Callable, Tuple, Union

import numpy as np
from scipy import sparse

from gaugelab.exceptions import ConfigurationError


class InvalidGrid(ConfigurationError):
    """Raised when a grid has too few nodes or a non-positive side."""


class GridMismatch(ConfigurationError):
    """Raised when grid functions from different grids are combined."""


class NonFiniteValues(ConfigurationError):
    """Raised when a grid function would hold NaN or infinite values."""


class BumpTooClose(ConfigurationError):
    """Raised when a bump would reach into the boundary margin."""


class Grid2D:
    """
    A uniform tensor grid on a rectangle.

    Grids compare and hash by value so that cached operators can be shared
    between grid functions built independently on the same rectangle.
    """

    __slots__ = ("nx", "ny", "lx", "ly")

    def __init__(self, nx: int, ny: int = None, lx: float = 1.0, ly: float = 1.0):
        ny = nx if ny is None else ny
        if nx < 5 or ny < 5:
            raise InvalidGrid(f"A grid needs at least 5 nodes per axis, got {nx}x{ny}.")
        if not lx > 0 or not ly > 0:
            raise InvalidGrid(f"Rectangle sides must be positive, got {lx}x{ly}.")
        self.nx = int(nx)
        self.ny = int(ny)
        self.lx = float(lx)
        self.ly = float(ly)

    @property
    def hx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def h(self) -> float:
        """The coarser of the two mesh steps."""
        return max(self.hx, self.hy)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.nx, self.ny

    @property
    def interior_shape(self) -> Tuple[int, int]:
        return self.nx - 2, self.ny - 2

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def interior_count(self) -> int:
        return (self.nx - 2) * (self.ny - 2)

    @property
    def boundary_count(self) -> int:
        return 2 * self.nx + 2 * self.ny - 4

    @property
    def perimeter(self) -> float:
        return 2 * (self.lx + self.ly)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.lx, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.ly, self.ny)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """The nodal coordinate arrays, both of shape ``(nx, ny)``."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[1:-1, 1:-1] = True
        return mask

    def boundary_nodes(self) -> Tuple[np.ndarray, np.ndarray]:
        """The ``(i, j)`` indices of the boundary nodes in traversal order."""
        return _boundary_nodes(self)

    def boundary_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        bi, bj = self.boundary_nodes()
        return self.x[bi], self.y[bj]

    def boundary_arclength(self) -> np.ndarray:
        """Arclength from the origin corner to every boundary node, along the traversal."""
        segments = _boundary_segments(self)
        return np.concatenate(([0.0], np.cumsum(segments[:-1])))

    def interior_to_flat(self, i: int, j: int) -> int:
        """Maps an interior node to its position in the interior unknown vector."""
        if not (0 < i < self.nx - 1 and 0 < j < self.ny - 1):
            raise IndexError(f"({i}, {j}) is not an interior node.")
        return (i - 1) * (self.ny - 2) + (j - 1)

    def flat_to_interior(self, k: int) -> Tuple[int, int]:
        if not 0 <= k < self.interior_count:
            raise IndexError(f"{k} is outside the interior unknowns.")
        i, j = divmod(k, self.ny - 2)
        return i + 1, j + 1

    def boundary_position(self, i: int, j: int) -> int:
        """Maps a boundary node to its place in the traversal."""
        lookup = _boundary_lookup(self)
        try:
            return lookup[(i, j)]
        except KeyError:
            raise IndexError(f"({i}, {j}) is not a boundary node.")

    def boundary_node(self, k: int) -> Tuple[int, int]:
        bi, bj = self.boundary_nodes()
        return int(bi[k]), int(bj[k])

    def _key(self):
        return self.nx, self.ny, self.lx, self.ly

    def __eq__(self, other):
        return isinstance(other, Grid2D) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"Grid2D(nx={self.nx}, ny={self.ny}, lx={self.lx}, ly={self.ly})"


@lru_cache(maxsize=32)
def _boundary_nodes(grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    nx, ny = grid.shape
    bottom = [(i, 0) for i in range(nx)]
    right = [(nx - 1, j) for j in range(1, ny)]
    top = [(i, ny - 1) for i in range(nx - 2, -1, -1)]
    left = [(0, j) for j in range(ny - 2, 0, -1)]
    nodes = np.array(bottom + right + top + left)
    bi, bj = nodes[:, 0].copy(), nodes[:, 1].copy()
    bi.flags.writeable = False
    bj.flags.writeable = False
    return bi, bj


@lru_cache(maxsize=32)
def _boundary_lookup(grid: Grid2D):
    bi, bj = _boundary_nodes(grid)
    return {(int(i), int(j)): k for k, (i, j) in enumerate(zip(bi, bj))}


@lru_cache(maxsize=32)
def _boundary_segments(grid: Grid2D) -> np.ndarray:
    """Length of the segment from each boundary node to the next one (cyclically)."""
    bx, by = grid.boundary_coordinates()
    return np.hypot(np.roll(bx, -1) - bx, np.roll(by, -1) - by)


Operand = Union[float, int, np.ndarray, "Field", "BoundaryField"]


class _GridFunction:
    """Shared arithmetic for grid functions. Instances are immutable."""

    __slots__ = ("grid", "values")
    __array_ufunc__ = None

    grid: Grid2D
    values: np.ndarray

    def _expected_shape(self, grid: Grid2D) -> Tuple[int, ...]:
        raise NotImplementedError

    def _init(self, grid: Grid2D, values):
        array = np.array(values, dtype=float)
        shape = self._expected_shape(grid)
        if array.shape != shape:
            if array.size != int(np.prod(shape)):
                raise GridMismatch(f"Expected {int(np.prod(shape))} values for {grid}, got {array.size}.")
            array = array.reshape(shape)
        if not np.all(np.isfinite(array)):
            raise NonFiniteValues(f"{type(self).__name__} on {grid} holds non-finite values.")
        array.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", array)

    def __setattr__(self, key, value):
        raise AttributeError(f"{type(self).__name__} is immutable.")

    def _operand(self, other: Operand):
        if isinstance(other, _GridFunction):
            if type(other) is not type(self):
                raise GridMismatch(f"Cannot combine {type(self).__name__} with {type(other).__name__}.")
            if other.grid != self.grid:
                raise GridMismatch(f"Cannot combine functions on {self.grid} and {other.grid}.")
            return other.values
        return other

    def _new(self, values):
        return type(self)(self.grid, values)

    def __add__(self, other: Operand):
        return self._new(self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other: Operand):
        return self._new(self.values - self._operand(other))

    def __rsub__(self, other: Operand):
        return self._new(self._operand(other) - self.values)

    def __mul__(self, other: Operand):
        return self._new(self.values * self._operand(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Operand):
        return self._new(self.values / self._operand(other))

    def __neg__(self):
        return self._new(-self.values)

    def __pow__(self, power: int):
        return self._new(self.values ** power)

    def apply(self, function: Callable[[np.ndarray], np.ndarray]):
        """Applies a vectorized function nodewise, e.g. ``u.apply(np.exp)``."""
        return self._new(function(self.values))

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return f"{type(self).__name__}({self.grid}, max={self.max_norm():.3e})"


class Field(_GridFunction):
    """A real value at every node of a grid."""

    __slots__ = ()

    def __init__(self, grid: Grid2D, values):
        self._init(grid, values)

    def _expected_shape(self, grid):
        return grid.shape

    @classmethod
    def zeros(cls, grid: Grid2D) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid2D, function: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "Field":
        """Samples ``function(x, y)`` (vectorized over coordinate arrays) at every node."""
        x, y = grid.coordinates()
        return cls(grid, np.broadcast_to(function(x, y), grid.shape))

    @classmethod
    def from_interior(cls, grid: Grid2D, interior: np.ndarray, trace: "BoundaryField" = None) -> "Field":
        """
        Builds a field from a vector of interior unknowns.

        :param trace: The boundary values. When missing, boundary nodes copy
            the nearest node of the first interior ring.
        """
        values = np.zeros(grid.shape)
        values[1:-1, 1:-1] = np.reshape(interior, grid.interior_shape)
        if trace is None:
            values[0, :] = values[1, :]
            values[-1, :] = values[-2, :]
            values[:, 0] = values[:, 1]
            values[:, -1] = values[:, -2]
        else:
            if trace.grid != grid:
                raise GridMismatch(f"Trace lives on {trace.grid}, not {grid}.")
            bi, bj = grid.boundary_nodes()
            values[bi, bj] = trace.values
        return cls(grid, values)

    def interior(self) -> np.ndarray:
        """The interior unknown vector (a copy)."""
        return self.values[1:-1, 1:-1].ravel()

    def trace(self) -> "BoundaryField":
        bi, bj = self.grid.boundary_nodes()
        return BoundaryField(self.grid, self.values[bi, bj])

    def with_trace(self, trace: "BoundaryField") -> "Field":
        return Field.from_interior(self.grid, self.interior(), trace)

    def interior_max_norm(self) -> float:
        return float(np.max(np.abs(self.values[1:-1, 1:-1])))


class BoundaryField(_GridFunction):
    """A real value at every boundary node, in traversal order."""

    __slots__ = ()

    def __init__(self, grid: Grid2D, values):
        self._init(grid, values)

    def _expected_shape(self, grid):
        return (grid.boundary_count,)

    @classmethod
    def zeros(cls, grid: Grid2D) -> "BoundaryField":
        return cls(grid, np.zeros(grid.boundary_count))

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> "BoundaryField":
        return cls(grid, np.full(grid.boundary_count, float(value)))

    @classmethod
    def from_function(cls, grid: Grid2D, function: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "BoundaryField":
        x, y = grid.boundary_coordinates()
        return cls(grid, np.broadcast_to(function(x, y), (grid.boundary_count,)))

    def extend_by_zero(self) -> Field:
        """The field equal to this trace on the boundary and zero inside."""
        return Field.from_interior(self.grid, np.zeros(self.grid.interior_count), self)


def laplacian(u: Field) -> Field:
    """
    The five point Laplacian at interior nodes. Boundary entries are zero.
    Exact on quadratics.
    """
    grid, v = u.grid, u.values
    out = np.zeros(grid.shape)
    out[1:-1, 1:-1] = (
        (v[:-2, 1:-1] - 2 * v[1:-1, 1:-1] + v[2:, 1:-1]) / grid.hx ** 2
        + (v[1:-1, :-2] - 2 * v[1:-1, 1:-1] + v[1:-1, 2:]) / grid.hy ** 2
    )
    return Field(grid, out)


@lru_cache(maxsize=16)
def laplacian_matrix(grid: Grid2D) -> sparse.csr_matrix:
    """
    The five point Laplacian acting on interior unknowns with a zero trace.

    The matrix is cached per grid and shared; do not modify it in place.
    """
    mx, my = grid.interior_shape
    dxx = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(mx, mx)) / grid.hx ** 2
    dyy = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(my, my)) / grid.hy ** 2
    return (sparse.kron(dxx, sparse.identity(my)) + sparse.kron(sparse.identity(mx), dyy)).tocsr()


@lru_cache(maxsize=16)
def gradient_penalty_matrix(grid: Grid2D) -> sparse.csr_matrix:
    """
    ``R`` such that ``c @ R @ c`` is the forward difference approximation of
    ``∫|∇c|²`` over the interior block, for ``c`` a vector of interior unknowns.
    """
    mx, my = grid.interior_shape
    dx = sparse.diags([-1.0, 1.0], [0, 1], shape=(mx - 1, mx)) / grid.hx
    dy = sparse.diags([-1.0, 1.0], [0, 1], shape=(my - 1, my)) / grid.hy
    gx = sparse.kron(dx, sparse.identity(my))
    gy = sparse.kron(sparse.identity(mx), dy)
    return (grid.hx * grid.hy * (gx.T @ gx + gy.T @ gy)).tocsr()


@lru_cache(maxsize=16)
def normal_derivative_matrix(grid: Grid2D) -> sparse.csr_matrix:
    """
    Maps flattened nodal values to outward normal derivatives along the traversal.

    Each edge uses the second order one sided formula ``(3u_b - 4u_1 + u_2) / 2h``
    along the inward normal; corners average the two edge formulas.
    """
    nx, ny = grid.shape
    rows, cols, entries = [], [], []
    bi, bj = grid.boundary_nodes()
    for k, (i, j) in enumerate(zip(bi.tolist(), bj.tolist())):
        stencils = []
        if j == 0:
            stencils.append((((i, 0), (i, 1), (i, 2)), grid.hy))
        if j == ny - 1:
            stencils.append((((i, ny - 1), (i, ny - 2), (i, ny - 3)), grid.hy))
        if i == 0:
            stencils.append((((0, j), (1, j), (2, j)), grid.hx))
        if i == nx - 1:
            stencils.append((((nx - 1, j), (nx - 2, j), (nx - 3, j)), grid.hx))
        share = 1.0 / len(stencils)
        for nodes, step in stencils:
            for (a, b), weight in zip(nodes, (3.0, -4.0, 1.0)):
                rows.append(k)
                cols.append(a * ny + b)
                entries.append(share * weight / (2 * step))
    return sparse.csr_matrix((entries, (rows, cols)), shape=(grid.boundary_count, grid.size))


def normal_derivative(u: Field) -> BoundaryField:
    """The outward normal derivative of ``u`` at every boundary node."""
    return BoundaryField(u.grid, normal_derivative_matrix(u.grid) @ u.values.ravel())


@lru_cache(maxsize=16)
def quadrature_weights(grid: Grid2D) -> np.ndarray:
    """Tensor product trapezoid weights, shape ``(nx, ny)``."""
    wx = np.full(grid.nx, grid.hx)
    wx[[0, -1]] *= 0.5
    wy = np.full(grid.ny, grid.hy)
    wy[[0, -1]] *= 0.5
    weights = np.outer(wx, wy)
    weights.flags.writeable = False
    return weights


@lru_cache(maxsize=16)
def boundary_weights(grid: Grid2D) -> np.ndarray:
    """Trapezoid weights along the traversal: half of each adjacent segment."""
    segments = _boundary_segments(grid)
    weights = 0.5 * (segments + np.roll(segments, 1))
    weights.flags.writeable = False
    return weights


def integrate(w: Field) -> float:
    """Trapezoid rule over the rectangle. Exact on bilinear fields."""
    return float(np.sum(quadrature_weights(w.grid) * w.values))


def boundary_integrate(g: BoundaryField) -> float:
    """Trapezoid rule along the boundary. Exact on edgewise linear traces."""
    return float(np.dot(boundary_weights(g.grid), g.values))


def _check_bump(grid: Grid2D, center: Tuple[float, float], radius: float):
    cx, cy = center
    margin = 2 * grid.h
    if radius <= 0:
        raise BumpTooClose(f"Bump radius must be positive, got {radius}.")
    if cx - radius < margin or cx + radius > grid.lx - margin \
            or cy - radius < margin or cy + radius > grid.ly - margin:
        raise BumpTooClose(f"Bump at {center} with radius {radius} is within {margin:.3g} of the boundary.")


def _bump_profile(grid: Grid2D, center: Tuple[float, float], radius: float):
    x, y = grid.coordinates()
    rho = (x - center[0]) ** 2 + (y - center[1]) ** 2
    return rho, np.clip(1.0 - rho / radius ** 2, 0.0, None)


def make_bump(grid: Grid2D, center: Tuple[float, float], radius: float, amplitude: float) -> Field:
    """
    ``amplitude * max(0, 1 - r² / radius²)³``: twice continuously differentiable
    and identically zero on the boundary and its first two interior rings.

    :raises BumpTooClose: If the disk comes within ``2 * max(hx, hy)`` of the boundary.
    """
    _check_bump(grid, center, radius)
    _, s = _bump_profile(grid, center, radius)
    return Field(grid, amplitude * s ** 3)


def bump_laplacian(grid: Grid2D, center: Tuple[float, float], radius: float, amplitude: float) -> Field:
    """The exact Laplacian of :func:`make_bump`, sampled at the nodes."""
    _check_bump(grid, center, radius)
    rho, s = _bump_profile(grid, center, radius)
    return Field(grid, amplitude * (24 * rho * s / radius ** 4 - 12 * s ** 2 / radius ** 2))


def fourier_family(grid: Grid2D, count: int):
    """
    The first ``count`` arclength harmonics along the boundary:
    the constant, then ``cos(2πks/P)``, ``sin(2πks/P)`` for ``k = 1, 2, ...``.
    """
    s = grid.boundary_arclength()
    phase = 2 * np.pi * s / grid.perimeter
    family = [BoundaryField.constant(grid, 1.0)]
    harmonic = 1
    while len(family) < count:
        family.append(BoundaryField(grid, np.cos(harmonic * phase)))
        if len(family) < count:
            family.append(BoundaryField(grid, np.sin(harmonic * phase)))
        harmonic += 1
    return family[:count]


def hat_family(grid: Grid2D, count: int):
    """``count`` periodic hat functions evenly spaced in arclength, each of unit height."""
    s = grid.boundary_arclength()
    width = grid.perimeter / count
    family = []
    for m in range(count):
        distance = np.abs(s - m * width)
        distance = np.minimum(distance, grid.perimeter - distance)
        family.append(BoundaryField(grid, np.clip(1.0 - distance / width, 0.0, None)))
    return family
