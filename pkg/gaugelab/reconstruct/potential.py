"""
Potential
---------

Recovery of the potential ``Q`` of ``(Δ + Q) v = 0`` from first order
boundary data: pairs ``(f_i, ∂_ν v_i)``. The nodal values of ``Q`` on the
interior minimize

``Φ(Q) = 1/n Σ_i ‖∂_ν v_i[Q] - d_i‖² / ‖d_i‖² + α σ ‖∇Q‖²``

where the boundary norm is the trapezoid L² norm along the boundary and
``‖∇Q‖²`` is the forward difference Dirichlet energy over the interior block.
Every datum is whitened by its own norm, floored at ``1e-3`` of the largest,
so the square root of the misfit reads as a relative residual and noise at
level ``ε`` leaves a residual of about ``ε``. The weight ``α`` is relative:
``σ`` is the trace of the Gauss-Newton matrix of the misfit at ``Q = 0``
over the trace of the penalty, which makes ``α`` independent of the grid
spacing and of the size of the data.
Minimization is Gauss-Newton with Levenberg-Marquardt damping; the gradient
is also available through one adjoint solve per datum.
"""

from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import splu

from gaugelab import config, logger
from gaugelab.events import EventHub, EventList
from gaugelab.exceptions import ConfigurationError, SolverError
from gaugelab.forward import Scenario, boundary_lift, check_eigenvalue
from gaugelab.grid import (
    BoundaryField, Field, boundary_weights, gradient_penalty_matrix, laplacian_matrix, normal_derivative_matrix,
)
from gaugelab.nonlinearity import Nonlinearity
from gaugelab.reconstruct.dataset import DNDataset
from gaugelab.reconstruct.results import ReconstructionResult


class Diverged(SolverError):
    """Raised when ten candidate steps in a row fail to decrease the objective."""


class IllPosed(SolverError):
    """Raised when an iterate makes the forward problem (nearly) singular."""


class InversionEvent(EventList):

    @staticmethod
    def gauss_newton_step(iteration: int, objective: float, relative_residual: float):
        """A damped Gauss-Newton step was accepted."""

    @staticmethod
    def inversion_finished(result: ReconstructionResult):
        """The inversion stopped."""


def interior_columns(grid) -> Tuple[np.ndarray, np.ndarray]:
    """Flat node indices of the interior unknowns and of the boundary traversal."""
    flat = np.arange(grid.size).reshape(grid.shape)
    bi, bj = grid.boundary_nodes()
    return flat[1:-1, 1:-1].ravel(), flat[bi, bj]


def datum_weights(data: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    ``1 / (n ‖d_i‖²)`` per datum, with norms floored at ``1e-3`` of the
    largest so that a (nearly) silent datum cannot dominate the misfit.
    """
    norms = np.sqrt((data ** 2) @ weights)
    top = float(norms.max()) if len(norms) else 0.0
    if top <= 0:
        return np.full(len(data), 1.0 / max(len(data), 1))
    return 1.0 / (len(data) * np.maximum(norms, 1e-3 * top) ** 2)


class PotentialInversion:
    """
    Output least squares for ``Q``.

    :param d: The dataset; only its first order forms are used.
    :param alpha_reg: The relative weight of the gradient penalty.
    :param check_well_posed: Run the eigenvalue check at every accepted iterate.
    """

    max_failures = 10
    stall = 1e-8
    """Relative objective changes below this are round-off and end the run."""

    def __init__(self, d: DNDataset, alpha_reg: float = config.default_alpha_reg,
                 max_iterations: int = 50, tolerance: float = 1e-6, check_well_posed: bool = True):
        if alpha_reg <= 0:
            raise ConfigurationError(f"alpha_reg must be positive, got {alpha_reg}.")
        if len(d.first) < 8:
            raise ConfigurationError(f"Potential recovery needs at least 8 input/output pairs, got {len(d.first)}.")
        self.grid = d.grid
        self.alpha_reg = alpha_reg
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.check_well_posed = check_well_posed
        self.hub = EventHub(InversionEvent)

        interior, boundary = interior_columns(self.grid)
        normal = normal_derivative_matrix(self.grid)
        self._normal_interior = normal[:, interior].tocsr()
        self._laplacian = laplacian_matrix(self.grid)
        self._penalty = gradient_penalty_matrix(self.grid)
        self._weights = boundary_weights(self.grid)

        inputs = np.stack([f.values for f in d.inputs])
        self._lifts = np.stack([boundary_lift(f) for f in d.inputs])
        self._boundary_part = (normal[:, boundary] @ inputs.T).T
        self._data = np.stack([g.values for g in d.first])
        self._row_weights = datum_weights(self._data, self._weights)[:, np.newaxis] * self._weights[np.newaxis, :]
        self.scale = self._penalty_scale()
        self._alpha = alpha_reg * self.scale

    def _penalty_scale(self) -> float:
        """``tr(JᵀWJ) / tr(P)`` at ``Q = 0``, without forming the Jacobian."""
        factor = self._factor(np.zeros(self.unknowns))
        states = self._states(factor)
        transfer = factor.solve(self._normal_interior.T.toarray())
        trace = float(np.sum((self._row_weights @ (transfer ** 2).T) * states ** 2))
        penalty_trace = float(self._penalty.diagonal().sum())
        return trace / penalty_trace if trace > 0 else 1.0

    @property
    def unknowns(self) -> int:
        return self.grid.interior_count

    def _factor(self, q: np.ndarray):
        try:
            return splu(sparse.csc_matrix(self._laplacian + sparse.diags(q)))
        except RuntimeError as error:
            raise IllPosed(f"The forward operator is singular at this potential: {error}")

    def _states(self, factor) -> np.ndarray:
        return factor.solve(-self._lifts.T).T

    def _residuals(self, states: np.ndarray) -> np.ndarray:
        return (self._normal_interior @ states.T).T + self._boundary_part - self._data

    def _misfit(self, residuals: np.ndarray) -> float:
        return float(np.sum(self._row_weights * residuals ** 2))

    def _regularization(self, q: np.ndarray) -> float:
        return float(self._alpha * q @ (self._penalty @ q))

    def objective(self, q: np.ndarray) -> float:
        """``Φ`` at a vector of interior potential values."""
        return self._misfit(self._residuals(self._states(self._factor(q)))) + self._regularization(q)

    def relative_residual(self, q: np.ndarray) -> float:
        """The root mean square of the per datum relative misfits."""
        return float(np.sqrt(self._misfit(self._residuals(self._states(self._factor(q))))))

    def gradient(self, q: np.ndarray) -> np.ndarray:
        """``∇Φ`` by the adjoint method: one adjoint solve per datum."""
        factor = self._factor(q)
        states = self._states(factor)
        weighted = self._row_weights * self._residuals(states)
        adjoints = factor.solve(np.asarray(self._normal_interior.T @ weighted.T)).T
        return -2 * np.sum(states * adjoints, axis=0) + 2 * self._alpha * (self._penalty @ q)

    def jacobian(self, q: np.ndarray) -> np.ndarray:
        """The stacked sensitivities ``∂ r_i / ∂Q``, shape ``(data * boundary nodes, unknowns)``."""
        factor = self._factor(q)
        return self._jacobian(factor, self._states(factor))

    def _jacobian(self, factor, states: np.ndarray) -> np.ndarray:
        transfer = factor.solve(self._normal_interior.T.toarray()).T
        return np.concatenate([-transfer * v[np.newaxis, :] for v in states])

    def _check(self, q: np.ndarray):
        if not self.check_well_posed:
            return
        grid = self.grid
        potential = Field.from_interior(grid, q)
        s = Scenario(Nonlinearity.linear(potential), Field.zeros(grid), BoundaryField.zeros(grid), "potential")
        eigenvalue = check_eigenvalue(s, Field.zeros(grid))
        if abs(eigenvalue) < config.well_posed_threshold:
            raise IllPosed(f"0 is (nearly) a Dirichlet eigenvalue at the current potential: {eigenvalue:.3e}")

    def _candidate(self, q: np.ndarray, hessian: np.ndarray, gradient: np.ndarray, damping: float):
        try:
            step = linalg.solve(hessian + damping * np.diag(np.diag(hessian)), -gradient, assume_a="pos")
            candidate = q + step
            factor = self._factor(candidate)
            states = self._states(factor)
            residuals = self._residuals(states)
            return candidate, factor, states, residuals, self._misfit(residuals) + self._regularization(candidate)
        except (linalg.LinAlgError, IllPosed):
            return None

    def run(self, init: Field = None) -> ReconstructionResult:
        """
        :param init: The starting potential; zero by default.
        :raises Diverged:
        :raises IllPosed:
        """
        q = np.zeros(self.unknowns) if init is None else init.interior()
        self._check(q)
        factor = self._factor(q)
        states = self._states(factor)
        residuals = self._residuals(states)
        objective = self._misfit(residuals) + self._regularization(q)
        history = [float(np.sqrt(objective))]
        row_weights = np.sqrt(self._row_weights.ravel())
        penalty = self._penalty.toarray()
        damping, failures, steps = 1e-4, 0, 0
        hessian = gradient = None

        for _ in range(self.max_iterations):
            relative = float(np.sqrt(self._misfit(residuals)))
            if relative < self.tolerance:
                break
            if hessian is None:
                jacobian = row_weights[:, np.newaxis] * self._jacobian(factor, states)
                hessian = jacobian.T @ jacobian + self._alpha * penalty
                gradient = jacobian.T @ (row_weights * residuals.ravel()) + self._alpha * (self._penalty @ q)

            candidate = self._candidate(q, hessian, gradient, damping)
            change = -np.inf if candidate is None else (objective - candidate[-1]) / objective
            if abs(change) <= self.stall:
                logger.info("Potential inversion stalled after %s steps at relative residual %.3e", steps, relative)
                break
            if change < 0:
                failures += 1
                damping *= 10
                if failures >= self.max_failures:
                    raise Diverged(f"{failures} steps in a row failed to decrease the objective ({objective:.6e}).")
                continue

            failures = 0
            damping = max(damping / 10, 1e-12)
            q, factor, states, residuals, objective = candidate
            hessian = gradient = None
            self._check(q)
            steps += 1
            relative = float(np.sqrt(self._misfit(residuals)))
            history.append(float(np.sqrt(objective)))
            logger.debug("Gauss-Newton step %s: objective %.6e, relative residual %.3e", steps, objective, relative)
            self.hub.emit(InversionEvent.gauss_newton_step, steps, objective, relative)
        else:
            logger.warning("Potential inversion hit its iteration cap of %s", self.max_iterations)

        result = ReconstructionResult({"Q": Field.from_interior(self.grid, q)}, history, self.alpha_reg)
        self.hub.emit(InversionEvent.inversion_finished, result)
        return result


def recover_potential(d: DNDataset, alpha_reg: float = config.default_alpha_reg, init: Field = None) -> Field:
    """The minimizing potential, see :class:`PotentialInversion`."""
    return PotentialInversion(d, alpha_reg).run(init).fields["Q"]


def select_alpha(d: DNDataset, candidates: Sequence[float] = None, noise: float = None,
                 safety: float = 1.5) -> Tuple[float, ReconstructionResult]:
    """
    Discrepancy principle over a grid of weights: the largest weight whose
    relative data residual stays within ``safety * noise``. Without noise the
    smallest weight wins.

    :param candidates: Five logarithmically spaced weights from ``1e-6`` to ``1e-2`` by default.
    """
    candidates = sorted(np.logspace(-6, -2, 5) if candidates is None else candidates)
    noise = d.noise if noise is None else noise
    runs: List[Tuple[float, float, ReconstructionResult]] = []
    for alpha in candidates:
        inversion = PotentialInversion(d, alpha)
        result = inversion.run()
        residual = inversion.relative_residual(result.fields["Q"].interior())
        logger.info("alpha %.1e: relative data residual %.3e", alpha, residual)
        runs.append((alpha, residual, result))

    if noise <= 0:
        alpha, _, result = runs[0]
        return alpha, result
    admissible = [run for run in runs if run[1] <= safety * noise]
    alpha, _, result = admissible[-1] if admissible else runs[0]
    return alpha, result
