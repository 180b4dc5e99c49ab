"""
Forward
-------

The Dirichlet problem ``Δu + a(x, u) = F`` in the rectangle, ``u = f`` on
its boundary, solved by damped Newton on the interior unknowns, and the
Dirichlet-to-Neumann map ``f ↦ ∂_ν u`` built on top of it.

Also here: the eigenvalue check that decides whether a linearization is
well posed, and the energy functional of the monotone cubic example.

A solve returns the solution together with a :class:`SolveReport`:

.. code-block:: python

    u, report = solve(scenario, f)
    assert report.converged
    g = dn_map(scenario, f)
"""

from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Callable, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, gmres, spilu, splu

from gaugelab import config, logger
from gaugelab.events import EventHub, EventList
from gaugelab.exceptions import ConfigurationError, SolverError
from gaugelab.grid import (
    BoundaryField, Field, Grid2D, GridMismatch, integrate, laplacian, laplacian_matrix,
    normal_derivative, quadrature_weights,
)
from gaugelab.nonlinearity import Nonlinearity, NonlinearityKind


class NewtonDiverged(SolverError):
    """Raised when Newton hits its iteration cap or runs out of step halvings."""


class SingularJacobian(SolverError):
    """Raised when a linear solve with the Newton matrix breaks down."""


class PowerIterationStalled(SolverError):
    """Raised when inverse iteration does not settle within its cap."""


class WrongVariant(ConfigurationError):
    """Raised when an operation is asked of a nonlinearity it does not apply to."""


class Scenario:
    """
    One instance of ``Δu + a(x, u) = F`` with a base Dirichlet datum ``f0``.

    :param truth: An optional known solution for the base datum,
        carried by manufactured scenarios.
    """

    __slots__ = ("a", "F", "f0", "name", "truth")

    def __init__(self, a: Nonlinearity, F: Field, f0: BoundaryField, name: str = "custom", truth: Field = None):
        grid = a.grid
        if F.grid != grid or f0.grid != grid or (truth is not None and truth.grid != grid):
            raise GridMismatch("The nonlinearity, source, base datum, and truth must share one grid.")
        self.a = a
        self.F = F
        self.f0 = f0
        self.name = name
        self.truth = truth

    @property
    def grid(self) -> Grid2D:
        return self.a.grid

    def replace(self, **changes) -> "Scenario":
        """A copy with some components swapped out."""
        values = {slot: getattr(self, slot) for slot in self.__slots__}
        values.update(changes)
        return Scenario(**values)

    def __repr__(self):
        return f"Scenario({self.name!r}, {self.a.kind.value}, {self.grid})"


class SolveReport(NamedTuple):
    iterations: int
    residual_history: List[float]
    converged: bool
    damping_events: int


class SolverEvent(EventList):

    @staticmethod
    def newton_step(iteration: int, residual: float, step: float):
        """A Newton step was accepted with the given damping factor."""

    @staticmethod
    def solve_finished(report: SolveReport):
        """A solve converged."""


@lru_cache(maxsize=8)
def _laplace_factor(grid: Grid2D):
    return splu(laplacian_matrix(grid).tocsc())


def boundary_lift(f: BoundaryField) -> np.ndarray:
    """The contribution of the boundary values to the interior Laplacian."""
    return laplacian(f.extend_by_zero()).interior()


def harmonic_extension(f: BoundaryField) -> Field:
    """The discrete harmonic function with trace ``f``."""
    interior = _laplace_factor(f.grid).solve(-boundary_lift(f))
    return Field.from_interior(f.grid, interior, f)


def residual(s: Scenario, u: Field) -> Field:
    """``G(u) = Δu + a(x, u) - F`` on the interior, zero on the boundary."""
    g = laplacian(u) + s.a.evaluate(u) - s.F
    return Field.from_interior(s.grid, g.interior(), BoundaryField.zeros(s.grid))


def solve_linear(matrix: sparse.spmatrix, rhs: np.ndarray, method: str = "direct",
                 tolerance: float = config.linear_tolerance) -> np.ndarray:
    """
    Solves one sparse system of the interior unknowns.

    :param method: ``direct`` for a sparse LU factorization, ``krylov`` for
        ILU-preconditioned GMRES to the given relative residual.
    :raises SingularJacobian: If the factorization or the iteration breaks down.
    """
    if method == "direct":
        try:
            solution = splu(sparse.csc_matrix(matrix)).solve(rhs)
        except RuntimeError as error:
            raise SingularJacobian(f"Sparse factorization failed: {error}")
    elif method == "krylov":
        try:
            ilu = spilu(sparse.csc_matrix(matrix), drop_tol=1e-5)
        except RuntimeError as error:
            raise SingularJacobian(f"Incomplete factorization failed: {error}")
        preconditioner = LinearOperator(matrix.shape, ilu.solve)
        solution, info = gmres(matrix, rhs, rtol=tolerance, atol=0.0, restart=100, maxiter=50, M=preconditioner)
        if info != 0:
            raise SingularJacobian(f"GMRES stopped with status {info}.")
    else:
        raise ConfigurationError(f"Unknown linear method {method!r}.")
    if not np.all(np.isfinite(solution)):
        raise SingularJacobian("Linear solve produced non-finite values.")
    return solution


class NewtonSolver:
    """
    Damped Newton for the semilinear Dirichlet problem.

    Each step solves ``(Δ_h + diag ∂_z a(u)) δ = -G(u)`` with a zero trace and
    halves the step until the max-norm residual decreases.

    :param linear_method: ``direct`` or ``krylov``, see :func:`solve_linear`.
    :param continuation: Fall back to path-following from the base datum when
        the solve from the initial guess fails.
    """

    def __init__(self, tolerance: float = config.newton_tolerance,
                 max_iterations: int = config.newton_max_iterations,
                 max_halvings: int = config.newton_max_halvings,
                 linear_method: str = "direct",
                 linear_tolerance: float = config.linear_tolerance,
                 continuation: bool = False,
                 continuation_steps: int = config.continuation_steps):
        if linear_method not in ("direct", "krylov"):
            raise ConfigurationError(f"Unknown linear method {linear_method!r}.")
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.max_halvings = max_halvings
        self.linear_method = linear_method
        self.linear_tolerance = linear_tolerance
        self.continuation = continuation
        self.continuation_steps = continuation_steps
        self.hub = EventHub(SolverEvent)

    def solve(self, s: Scenario, f: BoundaryField = None, init: Field = None) -> Tuple[Field, SolveReport]:
        """
        :param f: The full Dirichlet datum; the base datum of the scenario when missing.
        :param init: The initial guess; its trace is replaced by ``f``.
            Defaults to the harmonic extension of ``f``.
        :raises NewtonDiverged:
        :raises SingularJacobian:
        """
        f = s.f0 if f is None else f
        if f.grid != s.grid or (init is not None and init.grid != s.grid):
            raise GridMismatch("Datum and initial guess must live on the scenario grid.")

        try:
            return self._newton(s, f, harmonic_extension(f) if init is None else init)
        except (NewtonDiverged, SingularJacobian) as error:
            if not self.continuation:
                raise
            logger.warning("Newton failed on %s (%s), falling back to continuation", s, error)
            return self._continuation(s, f)

    def _newton(self, s: Scenario, f: BoundaryField, init: Field) -> Tuple[Field, SolveReport]:
        lap = laplacian_matrix(s.grid)
        lift = boundary_lift(f)
        source = s.F.interior()

        def evaluate(unknowns):
            with np.errstate(over="ignore", invalid="ignore"):
                g = lap @ unknowns + lift + s.a.interior_derivative(unknowns, 0) - source
            norm = float(np.max(np.abs(g)))
            return g, (norm if np.isfinite(norm) else np.inf)

        unknowns = init.interior()
        g, norm = evaluate(unknowns)
        if not np.isfinite(norm):
            raise NewtonDiverged(f"The initial guess for {s} has a non-finite residual.")
        history = [norm]
        damping_events = 0

        while norm > self.tolerance:
            if len(history) > self.max_iterations:
                raise NewtonDiverged(f"No convergence for {s} after {self.max_iterations} iterations "
                                     f"(residual {norm:.3e}).")
            jacobian = lap + sparse.diags(s.a.interior_derivative(unknowns, 1))
            step = solve_linear(jacobian, -g, self.linear_method, self.linear_tolerance)

            factor = 1.0
            for _ in range(self.max_halvings + 1):
                candidate = unknowns + factor * step
                g_candidate, norm_candidate = evaluate(candidate)
                if norm_candidate < norm:
                    break
                factor /= 2
                damping_events += 1
            else:
                raise NewtonDiverged(f"Step halving exhausted for {s} at residual {norm:.3e}.")

            unknowns, g, norm = candidate, g_candidate, norm_candidate
            history.append(norm)
            logger.debug("Newton step %s on %s: residual %.3e, factor %s", len(history) - 1, s, norm, factor)
            self.hub.emit(SolverEvent.newton_step, len(history) - 1, norm, factor)

        report = SolveReport(len(history) - 1, history, True, damping_events)
        self.hub.emit(SolverEvent.solve_finished, report)
        return Field.from_interior(s.grid, unknowns, f), report

    def _continuation(self, s: Scenario, f: BoundaryField) -> Tuple[Field, SolveReport]:
        """Walks the datum from ``f0`` to ``f``, halving the step whenever a stage fails."""
        u, report = self._newton(s, s.f0, harmonic_extension(s.f0))
        iterations, damping_events = report.iterations, report.damping_events
        reached, step = 0.0, 1.0 / self.continuation_steps
        while reached < 1.0:
            target = min(1.0, reached + step)
            datum = s.f0 + target * (f - s.f0)
            try:
                u, report = self._newton(s, datum, u.with_trace(datum))
            except (NewtonDiverged, SingularJacobian):
                step /= 2
                if step < 1.0 / (self.continuation_steps * 2 ** 10):
                    raise
                continue
            logger.debug("Continuation on %s reached %.4f", s, target)
            iterations += report.iterations
            damping_events += report.damping_events
            reached = target
        return u, SolveReport(iterations, report.residual_history, True, damping_events)


default_solver = NewtonSolver()


def solve(s: Scenario, f: BoundaryField = None, init: Field = None,
          solver: NewtonSolver = None) -> Tuple[Field, SolveReport]:
    """Solves the scenario with the datum ``f``. See :meth:`NewtonSolver.solve`."""
    return (solver or default_solver).solve(s, f, init)


def dn_map(s: Scenario, f: BoundaryField = None, init: Field = None, solver: NewtonSolver = None) -> BoundaryField:
    """The Dirichlet-to-Neumann map: the outward normal derivative of the solution."""
    u, _ = solve(s, f, init, solver)
    return normal_derivative(u)


def dn_map_batch(s: Scenario, data: Sequence[BoundaryField], workers: int = None,
                 solver: NewtonSolver = None) -> List[BoundaryField]:
    """
    The DN map at many data. Solves are independent and may run on a pool;
    results come back in the order of ``data``.
    """
    workers = config.workers if workers is None else workers
    if workers <= 1:
        return [dn_map(s, f, solver=solver) for f in data]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda f: dn_map(s, f, solver=solver), data))


def linearization_matrix(s: Scenario, u0: Field) -> sparse.csr_matrix:
    """``Δ_h + diag ∂_z a(x, u0)`` on the interior unknowns."""
    return (laplacian_matrix(s.grid) + sparse.diags(s.a.derivative(u0, 1).interior())).tocsr()


def check_eigenvalue(s: Scenario, u0: Field, shift: float = 0.0,
                     tolerance: float = config.eigen_tolerance,
                     max_iterations: int = config.eigen_max_iterations) -> float:
    """
    The eigenvalue of ``Δ_h + diag ∂_z a(x, u0)`` (zero trace) closest to ``shift``,
    by shifted inverse iteration with a Rayleigh quotient estimate.

    A magnitude below :data:`~gaugelab.config.well_posed_threshold` means the
    linearization at ``u0`` is not uniquely solvable.

    :raises PowerIterationStalled: If the estimate keeps moving after the iteration cap.
    """
    matrix = linearization_matrix(s, u0)
    shifted = (matrix - shift * sparse.identity(matrix.shape[0])).tocsc()
    try:
        factor = splu(shifted)
    except RuntimeError:
        logger.debug("Shifted operator of %s is exactly singular", s)
        return shift

    vector = np.random.default_rng(config.default_seed).standard_normal(matrix.shape[0])
    vector /= np.linalg.norm(vector)
    estimate = None
    for _ in range(max_iterations):
        image = factor.solve(vector)
        vector = image / np.linalg.norm(image)
        updated = float(vector @ (matrix @ vector))
        settled = tolerance * max(abs(updated), config.well_posed_threshold)
        if estimate is not None and abs(updated - estimate) <= settled:
            return updated
        estimate = updated
    raise PowerIterationStalled(f"Inverse iteration on {s} did not settle in {max_iterations} iterations.")


def monotone_cubic(grid: Grid2D, a3, source: Field, name: str = "monotone_cubic") -> Scenario:
    """
    The monotone cubic example ``-Δu + a3 u³ = source``, ``u = 0`` on the boundary,
    written in the lab's form ``Δu + a(x, u) = F`` with ``a = -a3 z³`` and ``F = -source``.
    """
    a3_field = a3 if isinstance(a3, Field) else Field.constant(grid, a3)
    zero = Field.zeros(grid)
    return Scenario(Nonlinearity.polynomial(zero, zero, -a3_field), -source, BoundaryField.zeros(grid), name)


def _monotone_coefficient(s: Scenario) -> Field:
    a = s.a
    if a.kind is not NonlinearityKind.POLYNOMIAL or a.degree != 3:
        raise WrongVariant("The energy needs a cubic polynomial nonlinearity.")
    if np.any(a.coefficient(1).values) or np.any(a.coefficient(2).values):
        raise WrongVariant("The energy needs a nonlinearity with only a cubic term.")
    a3 = -a.coefficient(3)
    if np.any(a3.values <= 0):
        raise WrongVariant("The energy needs -a_3 > 0 everywhere (a monotone cubic).")
    return a3


def dirichlet_energy(u: Field) -> float:
    """Forward difference approximation of ``∫|∇u|²`` with trapezoid weights across each difference."""
    grid, v = u.grid, u.values
    weights = quadrature_weights(grid)
    wx = weights[:, 0] * 2 / grid.hy
    wy = weights[0, :] * 2 / grid.hx
    dx = np.diff(v, axis=0) / grid.hx
    dy = np.diff(v, axis=1) / grid.hy
    return float(grid.hx * np.sum(dx ** 2 * wy[np.newaxis, :]) + grid.hy * np.sum(dy ** 2 * wx[:, np.newaxis]))


def energy(s: Scenario, u: Field) -> float:
    """
    ``E(u) = ½∫|∇u|² + ¼∫a3 u⁴ - ∫ source·u`` for a scenario built by
    :func:`monotone_cubic`. For ``u`` vanishing on the boundary, its
    derivative in a direction ``φ`` is ``-∫ φ G(u)`` exactly.

    :raises WrongVariant: If the nonlinearity is not a monotone cubic.
    """
    a3 = _monotone_coefficient(s)
    return 0.5 * dirichlet_energy(u) + 0.25 * integrate(a3 * u ** 4) + integrate(s.F * u)


def small_data_constant(s: Scenario, samples: Sequence[Tuple[BoundaryField, Field]],
                        solver: NewtonSolver = None) -> float:
    """
    The smallest ``C`` with ``‖u‖ ≤ C (‖f‖ + ‖F‖)`` over the sampled data and sources.

    :raises WrongVariant: If ``a(x, 0)`` does not vanish.
    """
    if s.a.kind is NonlinearityKind.EXPONENTIAL:
        raise WrongVariant("The small data bound needs a(x, 0) = 0.")
    constant = 0.0
    for f, F in samples:
        size = f.max_norm() + F.max_norm()
        if size == 0:
            continue
        u, _ = solve(s.replace(F=F, truth=None), f, solver=solver)
        constant = max(constant, u.max_norm() / size)
    logger.info("Small data constant of %s over %s samples: %.4g", s, len(samples), constant)
    return constant


class BasinScan(NamedTuple):
    radius: float
    """The largest radius reached before the first failure."""
    radii: List[float]
    converged: List[bool]


def scan_newton_basin(s: Scenario, f: BoundaryField, direction: BoundaryField, radii: Sequence[float],
                       solver: NewtonSolver = None) -> BasinScan:
    """
    Solves at ``f + r * direction`` for increasing ``r`` from the default
    initial guess and reports where Newton stops converging.
    """
    radii = sorted(radii)
    converged = []
    for radius in radii:
        try:
            solve(s, f + radius * direction, solver=solver)
        except (NewtonDiverged, SingularJacobian):
            converged.append(False)
        else:
            converged.append(True)
    reached = 0.0
    for radius, ok in zip(radii, converged):
        if not ok:
            break
        reached = radius
    return BasinScan(reached, radii, converged)


def solution_map(s: Scenario, solver: NewtonSolver = None) -> Callable[[BoundaryField], Field]:
    """The map ``f ↦ u`` as a callable, for smoothness checks."""
    return lambda f: solve(s, f, solver=solver)[0]
