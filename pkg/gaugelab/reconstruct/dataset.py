"""
Dataset
-------

Synthetic boundary measurements: the multilinear forms of a scenario's
DN map at its base datum, for every (symmetric) combination of the
boundary inputs up to the requested order, optionally with seeded
multiplicative noise.
"""

from itertools import combinations_with_replacement
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from gaugelab import config, logger
from gaugelab.events import EventHub, EventList
from gaugelab.exceptions import ConfigurationError
from gaugelab.forward import NewtonSolver, Scenario, solve
from gaugelab.grid import BoundaryField, Grid2D, GridMismatch, normal_derivative
from gaugelab.linearize import ExtractionMethod, LinearizedProblem, kth_divided_difference


class MissingOrder(ConfigurationError):
    """Raised when an inversion needs forms the dataset does not hold."""


Index = Tuple[int, ...]


class DNDataset(NamedTuple):
    """
    Forms are keyed by sorted index tuples into ``inputs``:
    ``first[i]``, ``second[(i, j)]`` with ``i <= j``, ``third[(i, j, k)]`` with ``i <= j <= k``.
    """

    grid: Grid2D
    f0: BoundaryField
    inputs: List[BoundaryField]
    first: List[BoundaryField]
    second: Dict[Index, BoundaryField]
    third: Dict[Index, BoundaryField]
    noise: float = 0.0
    method: ExtractionMethod = ExtractionMethod.DIRECT_SOLVE
    epsilon: Optional[float] = None
    family: str = "custom"
    seed: int = 0

    @property
    def order(self) -> int:
        """The highest order present."""
        return 3 if self.third else 2 if self.second else 1

    def form(self, *indices: int) -> BoundaryField:
        """A form by input indices, in any order."""
        key = tuple(sorted(indices))
        if len(key) == 1:
            return self.first[key[0]]
        table = self.second if len(key) == 2 else self.third
        try:
            return table[key]
        except KeyError:
            raise MissingOrder(f"The dataset holds no form for inputs {key}.")

    def require(self, order: int):
        """
        :raises MissingOrder: If forms of the given order are absent.
        """
        present = {1: bool(self.first), 2: bool(self.second), 3: bool(self.third)}
        if not present.get(order, False):
            raise MissingOrder(f"The dataset has no order {order} forms.")


class DatasetEvent(EventList):

    @staticmethod
    def form_computed(order: int, index: tuple):
        """One multilinear form of the dataset is ready."""


class DatasetBuilder:
    """
    Computes the forms of a dataset, emitting progress on :attr:`hub`.

    :param method: Solve the linearized hierarchy directly, or difference the nonlinear DN map.
    :param third_inputs: Use only the first few inputs for third order forms, whose count grows cubically.
    """

    def __init__(self, method: ExtractionMethod = ExtractionMethod.DIRECT_SOLVE,
                 epsilon: float = config.default_epsilon, workers: int = None,
                 third_inputs: int = None, solver: NewtonSolver = None):
        self.method = ExtractionMethod(method)
        self.epsilon = epsilon
        self.workers = workers
        self.third_inputs = third_inputs
        self.solver = solver
        self.hub = EventHub(DatasetEvent)

    def _direct(self, s: Scenario, inputs: Sequence[BoundaryField], order: int):
        u0, _ = solve(s, s.f0, solver=self.solver)
        problem = LinearizedProblem(s, u0)
        v = [problem.first(f) for f in inputs]
        first = []
        for i, field in enumerate(v):
            first.append(normal_derivative(field))
            self.hub.emit(DatasetEvent.form_computed, 1, (i,))

        w, second, third = {}, {}, {}
        if order >= 2:
            for key in combinations_with_replacement(range(len(inputs)), 2):
                w[key] = problem.second(v[key[0]], v[key[1]])
                second[key] = normal_derivative(w[key])
                self.hub.emit(DatasetEvent.form_computed, 2, key)
        if order >= 3:
            for i, j, k in combinations_with_replacement(range(self._third_count(inputs)), 3):
                top = problem.third(v[i], v[j], v[k], w[(i, j)], w[(i, k)], w[(j, k)])
                third[(i, j, k)] = normal_derivative(top)
                self.hub.emit(DatasetEvent.form_computed, 3, (i, j, k))
        return first, second, third

    def _differenced(self, s: Scenario, inputs: Sequence[BoundaryField], order: int):
        def form(key):
            value = kth_divided_difference(s, s.f0, [inputs[i] for i in key], self.epsilon,
                                           workers=self.workers, solver=self.solver).value
            self.hub.emit(DatasetEvent.form_computed, len(key), key)
            return value

        first = [form((i,)) for i in range(len(inputs))]
        second = {key: form(key) for key in combinations_with_replacement(range(len(inputs)), 2)} if order >= 2 else {}
        third = {key: form(key) for key in combinations_with_replacement(range(self._third_count(inputs)), 3)} \
            if order >= 3 else {}
        return first, second, third

    def _third_count(self, inputs):
        return len(inputs) if self.third_inputs is None else min(self.third_inputs, len(inputs))

    def generate(self, s: Scenario, inputs: Sequence[BoundaryField], order: int = 2, noise: float = 0.0,
                 seed: int = None, family: str = "custom") -> DNDataset:
        """
        :param noise: Relative noise level; every value becomes ``value * (1 + noise * N(0, 1))``.
        :raises MissingOrder: If the order is not 1, 2 or 3.
        """
        if order not in (1, 2, 3):
            raise MissingOrder(f"Datasets hold orders 1 to 3, not {order}.")
        if noise < 0:
            raise ConfigurationError(f"Noise level must be non-negative, got {noise}.")
        if any(f.grid != s.grid for f in inputs):
            raise GridMismatch("Boundary inputs must live on the scenario grid.")
        seed = config.default_seed if seed is None else seed

        logger.info("Generating order %s dataset of %s with %s inputs (%s)", order, s, len(inputs), self.method.value)
        if self.method is ExtractionMethod.DIRECT_SOLVE:
            first, second, third = self._direct(s, inputs, order)
        else:
            first, second, third = self._differenced(s, inputs, order)

        if noise > 0:
            rng = np.random.default_rng(seed)

            def perturb(g: BoundaryField) -> BoundaryField:
                return g * (1.0 + noise * rng.standard_normal(g.values.shape))

            first = [perturb(g) for g in first]
            second = {key: perturb(second[key]) for key in sorted(second)}
            third = {key: perturb(third[key]) for key in sorted(third)}

        return DNDataset(
            s.grid, s.f0, list(inputs), first, second, third, noise, self.method,
            None if self.method is ExtractionMethod.DIRECT_SOLVE else self.epsilon, family, seed,
        )


def generate_dataset(s: Scenario, inputs: Sequence[BoundaryField], order: int = 2,
                     method: ExtractionMethod = ExtractionMethod.DIRECT_SOLVE,
                     epsilon: float = config.default_epsilon, noise: float = 0.0, seed: int = None,
                     workers: int = None, third_inputs: int = None, family: str = "custom") -> DNDataset:
    """Builds a dataset in one call. See :class:`DatasetBuilder`."""
    builder = DatasetBuilder(method, epsilon, workers, third_inputs)
    return builder.generate(s, inputs, order, noise, seed, family)
