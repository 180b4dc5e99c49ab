"""
Linearize
---------

Higher order linearization of the Dirichlet-to-Neumann map around a base
datum ``f0``. With ``u`` the solution for ``f0 + Σ ε_l f_l``, the mixed
derivatives of ``u`` at ``ε = 0`` solve a hierarchy of linear problems with
the potential ``Q = ∂_z a(x, u0)``:

- first order ``(Δ + Q) v_l = 0``, ``v_l = f_l`` on the boundary,
- second order ``(Δ + Q) w_lm = -T2 v_l v_m``, zero trace,
- third order ``(Δ + Q) w_123 = -T2 (w_12 v_3 + w_23 v_1 + w_13 v_2) - T3 v_1 v_2 v_3``,

where ``T_k = ∂_z^k a(x, u0)``. The boundary traces of their normal
derivatives are the multilinear forms the inverse problems start from.

The forms can be extracted two ways: by solving the hierarchy directly, or by
mixed central differences of the nonlinear DN map over the ``2^k`` sign
patterns ``f0 ± ε f_1 ± ... ± ε f_k``. :func:`verify_linearization` cross
checks the two. Orders above three are only reachable by differences.
"""

from enum import Enum
from itertools import product
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from gaugelab import config, logger
from gaugelab.exceptions import ConfigurationError, SolverError
from gaugelab.forward import (
    NewtonSolver, Scenario, SingularJacobian, boundary_lift, check_eigenvalue, dn_map_batch,
    linearization_matrix, solve,
)
from gaugelab.grid import BoundaryField, Field, GridMismatch, normal_derivative


class StepTooSmall(SolverError):
    """Raised when halving the difference step changes the estimate more than the estimate itself."""


class InvalidOrder(ConfigurationError):
    """Raised when a form of an unsupported order is requested."""


class ExtractionMethod(str, Enum):
    DIRECT_SOLVE = "direct_solve"
    DIVIDED_DIFFERENCE = "divided_difference"


class MultilinearForm(NamedTuple):
    """The order ``k`` derivative of the DN map at ``f0`` applied to ``k`` boundary inputs."""

    order: int
    inputs: Tuple[BoundaryField, ...]
    value: BoundaryField
    method: ExtractionMethod
    epsilon: Optional[float] = None


class LinearizedProblem:
    """
    The linearization of a scenario at a base solution ``u0``.

    The operator ``Δ_h + diag T1`` is factorized once and reused for
    every solve of the hierarchy and for adjoint solves (the operator is
    symmetric).

    :param check_well_posed: Run the eigenvalue check first.
    :raises SingularJacobian: If the operator cannot be factorized, or
        the eigenvalue check finds it (nearly) singular.
    """

    def __init__(self, s: Scenario, u0: Field, check_well_posed: bool = False):
        if u0.grid != s.grid:
            raise GridMismatch("The base solution must live on the scenario grid.")
        self.scenario = s
        self.u0 = u0
        self.taylor = s.a.taylor_fields(u0, 3)
        self.matrix = linearization_matrix(s, u0)

        if check_well_posed:
            eigenvalue = check_eigenvalue(s, u0)
            if abs(eigenvalue) < config.well_posed_threshold:
                raise SingularJacobian(f"0 is (nearly) an eigenvalue of the linearization of {s}: {eigenvalue:.3e}")

        try:
            self._factor = splu(sparse.csc_matrix(self.matrix))
        except RuntimeError as error:
            raise SingularJacobian(f"The linearization of {s} is singular: {error}")

    @property
    def grid(self):
        return self.scenario.grid

    @property
    def potential(self) -> Field:
        """``Q = ∂_z a(x, u0)``."""
        return self.taylor[0]

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        """Solves ``(Δ_h + Q) x = rhs`` for the interior unknowns with a zero trace."""
        return self._factor.solve(np.asarray(rhs, dtype=float))

    def solve(self, source: Field, trace: BoundaryField) -> Field:
        """The solution of ``(Δ_h + Q) w = source`` inside with ``w = trace`` on the boundary."""
        interior = self.solve_interior(source.interior() - boundary_lift(trace))
        return Field.from_interior(self.grid, interior, trace)

    def first(self, f: BoundaryField) -> Field:
        return self.solve(Field.zeros(self.grid), f)

    def second(self, v1: Field, v2: Field) -> Field:
        return self.solve(-self.taylor[1] * v1 * v2, BoundaryField.zeros(self.grid))

    def third(self, v1: Field, v2: Field, v3: Field, w12: Field, w13: Field, w23: Field) -> Field:
        t2, t3 = self.taylor[1], self.taylor[2]
        source = -(t2 * (w12 * v3 + w23 * v1 + w13 * v2) + t3 * v1 * v2 * v3)
        return self.solve(source, BoundaryField.zeros(self.grid))


def linearized_solve(s: Scenario, u0: Field, fl: BoundaryField, check_well_posed: bool = True) -> Field:
    """
    The first linearization ``(Δ + ∂_z a(x, u0)) v = 0``, ``v = fl`` on the boundary.

    :param check_well_posed: Reject a linearization with an eigenvalue within
        :data:`~gaugelab.config.well_posed_threshold` of zero before solving.
    :raises SingularJacobian:
    """
    return LinearizedProblem(s, u0, check_well_posed).first(fl)


def second_order_solve(s: Scenario, u0: Field, v1: Field, v2: Field, check_well_posed: bool = True) -> Field:
    """The zero-trace solution of ``(Δ + Q) w = -∂²_z a(x, u0) v1 v2``."""
    return LinearizedProblem(s, u0, check_well_posed).second(v1, v2)


def third_order_solve(s: Scenario, u0: Field, v1: Field, v2: Field, v3: Field,
                      w12: Field, w13: Field, w23: Field, check_well_posed: bool = True) -> Field:
    """The zero-trace third order solution, see :meth:`LinearizedProblem.third`."""
    return LinearizedProblem(s, u0, check_well_posed).third(v1, v2, v3, w12, w13, w23)


def _check_order(inputs: Sequence[BoundaryField], highest: int):
    if not 1 <= len(inputs) <= highest:
        raise InvalidOrder(f"Forms of order 1 to {highest} are supported, got {len(inputs)} inputs.")


def direct_form(s: Scenario, f0: BoundaryField, inputs: Sequence[BoundaryField], u0: Field = None,
                problem: LinearizedProblem = None) -> MultilinearForm:
    """
    The form of order ``len(inputs)`` by solving the linearized hierarchy.

    :param u0: The base solution, solved for when missing.
    :param problem: A linearization at ``u0`` to reuse.
    """
    _check_order(inputs, 3)
    if problem is None:
        u0 = solve(s, f0)[0] if u0 is None else u0
        problem = LinearizedProblem(s, u0)

    v = [problem.first(f) for f in inputs]
    if len(v) == 1:
        top = v[0]
    elif len(v) == 2:
        top = problem.second(v[0], v[1])
    else:
        w12, w13, w23 = problem.second(v[0], v[1]), problem.second(v[0], v[2]), problem.second(v[1], v[2])
        top = problem.third(v[0], v[1], v[2], w12, w13, w23)
    return MultilinearForm(len(inputs), tuple(inputs), normal_derivative(top), ExtractionMethod.DIRECT_SOLVE)


def _symmetric_sum(rows: Sequence[np.ndarray]) -> np.ndarray:
    """Sums nodewise in sorted order so that the result ignores the order of ``rows``."""
    return np.sum(np.sort(np.stack(rows), axis=0), axis=0)


def _divided_difference(s: Scenario, f0: BoundaryField, inputs: Sequence[BoundaryField], epsilon: float,
                        workers: int = None, solver: NewtonSolver = None) -> BoundaryField:
    signs = list(product((1.0, -1.0), repeat=len(inputs)))
    data = [
        BoundaryField(s.grid, _symmetric_sum(
            [f0.values] + [sign * epsilon * f.values for sign, f in zip(pattern, inputs)]
        ))
        for pattern in signs
    ]
    traces = dn_map_batch(s, data, workers, solver)
    signed = [float(np.prod(pattern)) * g.values for pattern, g in zip(signs, traces)]
    return BoundaryField(s.grid, _symmetric_sum(signed) / (2 * epsilon) ** len(inputs))


def kth_divided_difference(s: Scenario, f0: BoundaryField, inputs: Sequence[BoundaryField],
                           epsilon: float = config.default_epsilon, check_step: bool = False,
                           workers: int = None, solver: NewtonSolver = None) -> MultilinearForm:
    """
    The mixed central difference of the DN map over the ``2^k`` vertices
    ``f0 ± ε f_1 ± ... ± ε f_k``, divided by ``(2ε)^k``. Symmetric in the
    inputs to the last bit.

    :param check_step: Also difference with ``ε / 2`` and raise if the two
        estimates disagree by more than half their size (and more than the
        round-off floor).
    :raises StepTooSmall:
    """
    _check_order(inputs, 3)
    if epsilon <= 0:
        raise ConfigurationError(f"The difference step must be positive, got {epsilon}.")
    if any(f.grid != s.grid for f in [f0, *inputs]):
        raise GridMismatch("Inputs must live on the scenario grid.")

    value = _divided_difference(s, f0, inputs, epsilon, workers, solver)
    if check_step:
        refined = _divided_difference(s, f0, inputs, epsilon / 2, workers, solver)
        gap = (value - refined).max_norm()
        if gap > max(0.5 * value.max_norm(), config.roundoff_floor):
            raise StepTooSmall(f"Estimates at ε={epsilon} and ε/2 differ by {gap:.3e} "
                               f"against a value of size {value.max_norm():.3e}.")
    return MultilinearForm(len(inputs), tuple(inputs), value, ExtractionMethod.DIVIDED_DIFFERENCE, epsilon)


class LinearizationReport(NamedTuple):
    order: int
    epsilon: float
    discrepancy: float
    """Max-norm gap between the difference at ``ε`` and the direct form."""
    half_step_discrepancy: float
    """The same gap at ``ε / 2``."""
    ratio: float
    extrapolated_discrepancy: float
    """The gap left after Richardson extrapolation of the two differences."""
    direct: Optional[MultilinearForm]
    divided: Optional[MultilinearForm]
    failures: List[str]


def verify_linearization(s: Scenario, f0: BoundaryField, inputs: Sequence[BoundaryField],
                         epsilon: float = config.default_epsilon, workers: int = None) -> LinearizationReport:
    """
    Computes a form both ways and reports how far apart they are. Solver
    failures are recorded in the report instead of raised.
    """
    nan = float("nan")
    try:
        direct = direct_form(s, f0, inputs)
        coarse = kth_divided_difference(s, f0, inputs, epsilon, workers=workers)
        fine = kth_divided_difference(s, f0, inputs, epsilon / 2, workers=workers)
    except SolverError as error:
        logger.warning("Linearization check of %s failed: %s", s, error)
        return LinearizationReport(len(inputs), epsilon, nan, nan, nan, nan, None, None, [str(error)])

    discrepancy = (coarse.value - direct.value).max_norm()
    half_step = (fine.value - direct.value).max_norm()
    extrapolated = (4 * fine.value - coarse.value) / 3
    ratio = discrepancy / half_step if half_step > 0 else float("inf")
    logger.debug("Order %s form of %s: gap %.3e at ε, %.3e at ε/2", len(inputs), s, discrepancy, half_step)
    return LinearizationReport(
        len(inputs), epsilon, discrepancy, half_step, ratio,
        (extrapolated - direct.value).max_norm(), direct, coarse, [],
    )
