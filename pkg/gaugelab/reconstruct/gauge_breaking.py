"""
Gauge breaking
--------------

Taylor fields alone leave a gauge freedom; a little prior knowledge removes it.
Each routine here turns Taylor fields into the base solution ``u0``, the
coefficients, and the source ``F = Δu0 + a(x, u0)``:

- polynomial of degree ``N`` with ``a_{N-1}`` known,
- ``q z e^z``, where two Taylor fields determine everything,
- sine-Gordon, where the phase of ``(T1, -T2)`` gives ``u0`` modulo ``2π``
  and the boundary datum picks the branch.

A recovered ``u0`` carries the grid scale oscillations of regularized
Taylor fields, which the five point stencil amplifies by ``1/h²``. ``Δu0``
in the source is therefore averaged over a Gaussian of width
``config.source_smoothing``; pass ``smoothing=0`` for the raw stencil.
"""

from collections import deque
from math import factorial, perm
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from gaugelab import config, logger
from gaugelab.exceptions import ConfigurationError, SolverError
from gaugelab.gauge import BranchAmbiguous
from gaugelab.grid import BoundaryField, Field, GridMismatch, laplacian
from gaugelab.nonlinearity import Nonlinearity


class DegeneratePivot(SolverError):
    """Raised when the field a formula divides by vanishes somewhere."""

    def __init__(self, message: str, nodes: List[Tuple[int, int]] = None):
        super().__init__(message)
        self.nodes = nodes or []
        """The ``(i, j)`` nodes where the pivot is too small to divide by."""


class UnwrapConflict(SolverError):
    """Raised when the unwrapped phase jumps by π or more between neighbours."""


def _check_pivot(pivot: Field, threshold: float, name: str):
    """``threshold`` is relative to the largest magnitude of the pivot."""
    top = pivot.max_norm()
    small = np.abs(pivot.values) <= threshold * top
    if np.any(small):
        nodes = [(int(i), int(j)) for i, j in zip(*np.nonzero(small))]
        raise DegeneratePivot(f"|{name}| <= {threshold:g} * {top:.3e} at {len(nodes)} node(s), first {nodes[:5]}; "
                              f"these nodes are not constrained by the Taylor fields.", nodes)


def _same_grid(*fields: Field):
    if any(f.grid != fields[0].grid for f in fields):
        raise GridMismatch("Taylor fields and priors must share one grid.")


def _with_trace(u0: Field, f0: BoundaryField = None) -> Field:
    return u0 if f0 is None else u0.with_trace(f0)


def smoothed_laplacian(u: Field, width: float = config.source_smoothing) -> Field:
    """
    The five point Laplacian of ``u`` averaged over a Gaussian of standard
    deviation ``width`` on the interior block, which is extended by
    reflection. Boundary entries are zero.
    """
    raw = laplacian(u)
    if width <= 0:
        return raw
    grid = u.grid
    block = raw.values[1:-1, 1:-1]
    averaged = ndimage.gaussian_filter(block, (width / grid.hx, width / grid.hy), mode="mirror")
    values = np.zeros(grid.shape)
    values[1:-1, 1:-1] = averaged
    return Field(grid, values)


def break_gauge_polynomial(T: List[Field], known: Field, f0: BoundaryField = None,
                           threshold: float = config.pivot_threshold,
                           smoothing: float = config.source_smoothing) -> Tuple[List[Field], Field, Field]:
    """
    Recovers ``a_1..a_N``, ``u0`` and ``F`` from ``T_1..T_N`` and the known ``a_{N-1}``.

    ``a_N = T_N / N!``, then ``u0`` from ``T_{N-1} = (N-1)! (a_{N-1} + N a_N u0)``,
    then the lower coefficients from ``T_k = Σ_{m≥k} m!/(m-k)! a_m u0^(m-k)``, top down.

    :param f0: The base datum; when given it replaces the boundary values of ``u0``.
    :raises DegeneratePivot: Where ``|T_N|`` falls to ``threshold`` of its maximum.
    """
    degree = len(T)
    if degree < 2:
        raise ConfigurationError("Gauge breaking needs Taylor fields up to degree 2 or more.")
    _same_grid(known, *T)
    _check_pivot(T[-1], threshold, f"T{degree}")

    coefficients = {degree: T[-1] / factorial(degree), degree - 1: known}
    u0 = (T[degree - 2] / factorial(degree - 1) - known) / (degree * coefficients[degree])
    u0 = _with_trace(u0, f0)

    for k in range(degree - 2, 0, -1):
        higher = Field.zeros(u0.grid)
        for m in range(k + 1, degree + 1):
            higher = higher + perm(m, k) * coefficients[m] * u0 ** (m - k)
        coefficients[k] = (T[k - 1] - higher) / factorial(k)

    ordered = [coefficients[k] for k in range(1, degree + 1)]
    F = smoothed_laplacian(u0, smoothing) + Nonlinearity.polynomial(*ordered).evaluate(u0)
    return ordered, u0, F


def break_gauge_exp_u(T1: Field, T2: Field, f0: BoundaryField = None, threshold: float = config.pivot_threshold,
                      smoothing: float = config.source_smoothing) -> Tuple[Field, Field, Field]:
    """
    For ``a = q z e^z``: ``q e^u0 = T2 - T1`` and ``q u0 e^u0 = 2 T1 - T2``.

    :raises DegeneratePivot: Where ``|T2 - T1|`` falls to ``threshold`` of its maximum.
    """
    _same_grid(T1, T2)
    pivot = T2 - T1
    _check_pivot(pivot, threshold, "T2 - T1")
    u0 = _with_trace((2 * T1 - T2) / pivot, f0)
    q = pivot * (-u0).apply(np.exp)
    F = smoothed_laplacian(u0, smoothing) + q * u0 * u0.apply(np.exp)
    return q, u0, F


def _wrap(phase: np.ndarray) -> np.ndarray:
    return np.angle(np.exp(1j * phase))


def _unwrap_from_boundary(phase: np.ndarray, seeds: np.ndarray, grid) -> np.ndarray:
    """Breadth first unwrapping of a nodal phase, starting from the boundary values."""
    nx, ny = grid.shape
    unwrapped = np.full(grid.shape, np.nan)
    bi, bj = grid.boundary_nodes()
    unwrapped[bi, bj] = seeds
    queue = deque(zip(bi.tolist(), bj.tolist()))
    while queue:
        i, j = queue.popleft()
        for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if 0 <= a < nx and 0 <= b < ny and np.isnan(unwrapped[a, b]):
                unwrapped[a, b] = unwrapped[i, j] + _wrap(phase[a, b] - phase[i, j])
                queue.append((a, b))

    if np.any(np.abs(np.diff(unwrapped, axis=0)) >= np.pi) or np.any(np.abs(np.diff(unwrapped, axis=1)) >= np.pi):
        raise UnwrapConflict("Neighbouring nodes differ by π or more after unwrapping; the Taylor fields are "
                             "inconsistent or the grid is too coarse.")
    return unwrapped


def recover_sine_gordon(T1: Field, T2: Field, f0: BoundaryField, threshold: float = config.pivot_threshold,
                        smoothing: float = config.source_smoothing) -> Tuple[Field, Field, Field]:
    """
    For ``a = q sin z``: ``T1 = q cos u0`` and ``T2 = -q sin u0``.

    The boundary values of the Taylor fields are copied from the nearest
    interior ring. There ``u0 = f0``, so ``T1 cos f0 - T2 sin f0 = q``, which
    fixes the sign of ``q`` and with it the branch of ``u0``. The phase is
    then unwrapped inward from the boundary.

    :raises DegeneratePivot: Where ``T1² + T2²`` falls to ``threshold`` of its maximum.
    :raises BranchAmbiguous: If the boundary projection sums to within ``threshold`` of ``Σ |q|`` around zero.
    :raises UnwrapConflict:
    """
    _same_grid(T1, T2, f0)
    grid = T1.grid
    t1 = Field.from_interior(grid, T1.interior())
    t2 = Field.from_interior(grid, T2.interior())
    _check_pivot(t1 ** 2 + t2 ** 2, threshold, "T1² + T2²")

    projection = t1.trace() * f0.apply(np.cos) - t2.trace() * f0.apply(np.sin)
    total = float(np.sum(projection.values))
    magnitude = float(np.sum(np.hypot(t1.trace().values, t2.trace().values)))
    if abs(total) <= threshold * magnitude:
        raise BranchAmbiguous("The boundary datum does not determine the sign of q.")
    sign = 1.0 if total > 0 else -1.0

    phase = np.arctan2(-t2.values, t1.values) + (0.0 if sign > 0 else np.pi)
    bi, bj = grid.boundary_nodes()
    seeds = f0.values + _wrap(phase[bi, bj] - f0.values)
    u0 = Field(grid, _unwrap_from_boundary(phase, seeds, grid)).with_trace(f0)

    cos_u, sin_u = np.cos(u0.values), np.sin(u0.values)
    use_cos = np.abs(cos_u) >= 1e-3
    q_values = np.where(use_cos, t1.values / np.where(use_cos, cos_u, 1.0), -t2.values / np.where(use_cos, 1.0, sin_u))
    q = Field(grid, q_values)
    F = smoothed_laplacian(u0, smoothing) + q * u0.apply(np.sin)
    logger.debug("Sine-Gordon branch fixed with sign %+d", int(sign))
    return q, u0, F
