"""
Taylor
------

Recovery of the second and third Taylor fields ``T2 = ∂²_z a(x, u0)`` and
``T3 = ∂³_z a(x, u0)`` from second and third order boundary forms, once the
potential ``Q = T1`` is known.

For a second order form ``w_ij`` (zero trace, ``(Δ + Q) w_ij = -T2 v_i v_j``)
and a boundary test datum ``g_m``, summation by parts gives

``∫_∂Ω g_m ∂_ν w_ij = -∫_Ω T2 v_i v_j 𝐯_m``

where the test field ``𝐯_m`` solves ``(Δ + Q) 𝐯_m = 0`` away from the
boundary ring. The discrete test fields are the adjoint states of the boundary
pairing, which makes the identity exact for the discrete forward model. Every
``(i, j, m)`` gives one linear equation for the nodal values of ``T2``; the
third order works the same way after subtracting the known ``T2`` part.

The linear systems are solved as Tikhonov regularized normal equations with
the discrete H¹ norm as penalty. The weight is relative to the ratio of the
traces of the normal matrix and the penalty, as for the potential. Test
data reuse the boundary inputs.
"""

from itertools import combinations_with_replacement
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import splu

from gaugelab import config, logger
from gaugelab.exceptions import ConfigurationError, SolverError
from gaugelab.forward import Scenario, boundary_lift, solve
from gaugelab.grid import (
    BoundaryField, Field, GridMismatch, boundary_integrate, boundary_weights, gradient_penalty_matrix, integrate,
    laplacian_matrix, normal_derivative_matrix,
)
from gaugelab.linearize import LinearizedProblem
from gaugelab.reconstruct.dataset import DNDataset
from gaugelab.reconstruct.potential import IllPosed, interior_columns


class RankDeficient(SolverError):
    """Raised when the regularized normal matrix is too ill-conditioned to trust."""


class TaylorFit(NamedTuple):
    field: Field
    coverage: Field
    """Column sensitivity per node, normalized to a maximum of one."""
    condition: float
    relative_residual: float
    unconstrained: int
    """Interior nodes whose sensitivity is below ``1e-3`` of the maximum."""


class _Adjoint:
    """The linear operator at a potential, with the states and test fields of a dataset."""

    def __init__(self, d: DNDataset, Q: Field):
        if Q.grid != d.grid:
            raise GridMismatch("The potential must live on the dataset grid.")
        grid = d.grid
        self.grid = grid
        try:
            self.factor = splu(sparse.csc_matrix(laplacian_matrix(grid) + sparse.diags(Q.interior())))
        except RuntimeError as error:
            raise IllPosed(f"The linearized operator is singular at this potential: {error}")
        interior, _ = interior_columns(grid)
        normal_interior = normal_derivative_matrix(grid)[:, interior]
        self.weights = boundary_weights(grid)
        self.states = self.factor.solve(-np.stack([boundary_lift(f) for f in d.inputs]).T).T
        tests = np.stack([f.values for f in d.inputs])
        self.tests = tests
        self.test_states = self.factor.solve(np.asarray(normal_interior.T @ (self.weights * tests).T)).T

    def pairing(self, form: BoundaryField) -> np.ndarray:
        """``∫ g_m · form`` for every test datum."""
        return self.tests @ (self.weights * form.values)


def test_functions(d: DNDataset, Q: Field) -> List[Field]:
    """The test fields ``𝐯_m`` for the boundary inputs of the dataset at potential ``Q``."""
    adjoint = _Adjoint(d, Q)
    area = d.grid.hx * d.grid.hy
    return [Field.from_interior(d.grid, t / area) for t in adjoint.test_states]


def _regularized_solve(gram: np.ndarray, rhs: np.ndarray, total: float, alpha_reg: float, grid) -> TaylorFit:
    if alpha_reg <= 0:
        raise ConfigurationError(f"alpha_reg must be positive, got {alpha_reg}.")
    penalty = (gradient_penalty_matrix(grid) + grid.hx * grid.hy * sparse.identity(grid.interior_count)).toarray()
    trace = float(np.trace(gram))
    scale = trace / float(np.trace(penalty)) if trace > 0 else 1.0
    matrix = gram + alpha_reg * scale * penalty

    sensitivity = np.sqrt(np.clip(np.diag(gram), 0.0, None))
    top = sensitivity.max()
    sensitivity = sensitivity / top if top > 0 else sensitivity
    unconstrained = int(np.sum(sensitivity < 1e-3))

    eigenvalues = linalg.eigvalsh(matrix)
    condition = float(eigenvalues[-1] / eigenvalues[0]) if eigenvalues[0] > 0 else float("inf")
    if condition > config.condition_limit:
        raise RankDeficient(f"Regularized normal matrix has condition {condition:.3e}; "
                            f"{unconstrained} nodes are barely constrained by the data.")
    solution = linalg.solve(matrix, rhs, assume_a="pos")

    squared = max(float(solution @ gram @ solution - 2 * solution @ rhs + total), 0.0)
    relative = float(np.sqrt(squared / total)) if total > 0 else float(np.sqrt(squared))
    if unconstrained:
        logger.warning("%s interior nodes are barely constrained by the data", unconstrained)
    return TaylorFit(
        Field.from_interior(grid, solution), Field.from_interior(grid, sensitivity), condition, relative, unconstrained,
    )


def fit_second_field(d: DNDataset, Q: Field, alpha_reg: float = config.default_alpha_reg) -> TaylorFit:
    """
    Least squares for ``T2`` from all second order forms against all test data.

    :raises MissingOrder: If the dataset has no second order forms.
    :raises RankDeficient:
    """
    d.require(2)
    adjoint = _Adjoint(d, Q)
    keys = sorted(d.second)
    products = np.stack([adjoint.states[i] * adjoint.states[j] for i, j in keys])
    pairings = np.stack([adjoint.pairing(d.second[key]) for key in keys])

    unknowns = d.grid.interior_count
    gram, rhs, total = np.zeros((unknowns, unknowns)), np.zeros(unknowns), 0.0
    for m, test_state in enumerate(adjoint.test_states):
        rows = -products * test_state[np.newaxis, :]
        b = pairings[:, m]
        gram += rows.T @ rows
        rhs += rows.T @ b
        total += float(b @ b)
    logger.info("Second field system: %s equations, %s unknowns", len(keys) * len(adjoint.test_states), unknowns)
    return _regularized_solve(gram, rhs, total, alpha_reg, d.grid)


def fit_third_field(d: DNDataset, Q: Field, T2: Field, alpha_reg: float = config.default_alpha_reg) -> TaylorFit:
    """
    Least squares for ``T3`` after moving the ``T2`` part of the third order
    source, recomputed from the second order states, to the data side.

    :raises MissingOrder: If the dataset has no third order forms.
    :raises RankDeficient:
    """
    d.require(3)
    if T2.grid != d.grid:
        raise GridMismatch("T2 must live on the dataset grid.")
    adjoint = _Adjoint(d, Q)
    v = adjoint.states
    t2 = T2.interior()
    keys = sorted(d.third)

    needed = sorted({pair for i, j, k in keys for pair in ((i, j), (i, k), (j, k))})
    w: Dict[Tuple[int, int], np.ndarray] = {
        (i, j): adjoint.factor.solve(-t2 * v[i] * v[j]) for i, j in needed
    }
    products = np.stack([v[i] * v[j] * v[k] for i, j, k in keys])
    known = np.stack([-t2 * (w[(i, j)] * v[k] + w[(j, k)] * v[i] + w[(i, k)] * v[j]) for i, j, k in keys])
    pairings = np.stack([adjoint.pairing(d.third[key]) for key in keys])
    pairings = pairings - known @ adjoint.test_states.T

    unknowns = d.grid.interior_count
    gram, rhs, total = np.zeros((unknowns, unknowns)), np.zeros(unknowns), 0.0
    for m, test_state in enumerate(adjoint.test_states):
        rows = -products * test_state[np.newaxis, :]
        b = pairings[:, m]
        gram += rows.T @ rows
        rhs += rows.T @ b
        total += float(b @ b)
    logger.info("Third field system: %s equations, %s unknowns", len(keys) * len(adjoint.test_states), unknowns)
    return _regularized_solve(gram, rhs, total, alpha_reg, d.grid)


def recover_second_field(d: DNDataset, Q: Field, alpha_reg: float = config.default_alpha_reg) -> Field:
    """``T2`` at the nodes. See :func:`fit_second_field`."""
    return fit_second_field(d, Q, alpha_reg).field


def recover_third_field(d: DNDataset, Q: Field, T2: Field, alpha_reg: float = config.default_alpha_reg) -> Field:
    """``T3`` at the nodes. See :func:`fit_third_field`."""
    return fit_third_field(d, Q, T2, alpha_reg).field


class IdentityCertificate(NamedTuple):
    boundary: List[float]
    """``|∫_∂Ω (∂_ν w¹ - ∂_ν w²) g|`` per triple, from the two second order forms."""
    interior: List[float]
    """``|∫_Ω (T2¹ - T2²) v v 𝐯|`` per triple, from the interior truth."""

    @property
    def worst(self) -> float:
        return max(self.boundary + self.interior)


def integral_identity_certificate(s1: Scenario, s2: Scenario, inputs: Sequence[BoundaryField],
                                  tests: Sequence[BoundaryField], f0: BoundaryField = None) -> IdentityCertificate:
    """
    Evaluates the second order integral identity for a pair of scenarios
    over every ``(i <= j, m)`` triple of inputs and test data. For a gauge
    equivalent pair both sides vanish up to discretization error.
    """
    if s1.grid != s2.grid:
        raise GridMismatch("Both scenarios must live on one grid.")
    f0 = s1.f0 if f0 is None else f0
    problems = [LinearizedProblem(s, solve(s, f0)[0]) for s in (s1, s2)]
    first = problems[0]
    v = [first.first(f) for f in inputs]
    test_fields = [first.first(g) for g in tests]
    gap = problems[0].taylor[1] - problems[1].taylor[1]

    boundary, interior = [], []
    for i, j in combinations_with_replacement(range(len(inputs)), 2):
        forms = []
        for problem in problems:
            vi, vj = problem.first(inputs[i]), problem.first(inputs[j])
            forms.append(problem.second(vi, vj))
        flux = BoundaryField(s1.grid, normal_derivative_matrix(s1.grid) @ (forms[0] - forms[1]).values.ravel())
        for g, test in zip(tests, test_fields):
            boundary.append(abs(boundary_integrate(flux * g)))
            interior.append(abs(integrate(gap * v[i] * v[j] * test)))
    return IdentityCertificate(boundary, interior)
