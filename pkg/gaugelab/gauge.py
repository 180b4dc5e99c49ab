"""
Gauge
-----

Different coefficient and source pairs can produce the same
Dirichlet-to-Neumann map. Given a gauge function ``ψ`` with
``ψ = ∂_ν ψ = 0`` on the boundary and a solution ``u2`` of the second
problem, ``u1 = u2 - ψ`` solves a transformed first problem with the same
boundary data and the same normal derivatives:

- polynomial ``a2``: ``a1_j = Σ_{m≥j} C(m, j) a2_m ψ^(m-j)`` and
  ``F1 = F2 - Δψ - Σ_m a2_m ψ^m``; the top coefficient is unchanged,
- exponential ``q2 e^z``: ``q1 = q2 e^ψ`` and ``F1 = F2 - Δψ``.

This module applies these transformations, checks numerically that the
maps agree (up to discretization error, which vanishes at rate ``h²``),
extracts ``ψ`` back from a pair of scenarios, and checks the sine-Gordon
case where no nontrivial gauge exists.
"""

from math import comb
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from more_itertools import pairwise

from gaugelab import logger
from gaugelab.exceptions import ConfigurationError, PropertyFailure, SolverError
from gaugelab.forward import Scenario, WrongVariant, solve
from gaugelab.grid import (
    BoundaryField, Field, Grid2D, GridMismatch, bump_laplacian, fourier_family, hat_family, laplacian,
    make_bump, normal_derivative,
)
from gaugelab.nonlinearity import Nonlinearity, NonlinearityKind


class InvariantViolation(PropertyFailure):
    """Raised when a gauge function does not have vanishing Cauchy data."""


class DegreeMismatch(ConfigurationError):
    """Raised when polynomial nonlinearities of different degrees are compared."""


class BranchAmbiguous(ConfigurationError):
    """Raised when the boundary datum cannot anchor the sine-Gordon branch."""


class GaugeFunction:
    """
    An admissible gauge ``ψ``: zero trace and zero normal derivative.

    :param laplacian: The exact Laplacian of ``ψ`` when it is known in closed
        form. Transforms use it in place of the five point stencil.
    :param tolerance: How far from zero the Cauchy data may be.
    :raises InvariantViolation:
    """

    __slots__ = ("psi", "_laplacian", "tolerance")

    def __init__(self, psi: Field, laplacian: Field = None, tolerance: float = 0.0):
        trace_size = psi.trace().max_norm()
        flux_size = normal_derivative(psi).max_norm()
        if trace_size > tolerance or flux_size > tolerance:
            raise InvariantViolation(f"Gauge Cauchy data are not zero: |ψ| = {trace_size:.3e}, "
                                     f"|∂_ν ψ| = {flux_size:.3e}, tolerance {tolerance:.3e}.")
        if laplacian is not None and laplacian.grid != psi.grid:
            raise GridMismatch("The Laplacian must live on the gauge grid.")
        self.psi = psi
        self._laplacian = laplacian
        self.tolerance = tolerance

    @classmethod
    def bump(cls, grid: Grid2D, center: Tuple[float, float], radius: float, amplitude: float) -> "GaugeFunction":
        return cls(make_bump(grid, center, radius, amplitude), bump_laplacian(grid, center, radius, amplitude))

    @classmethod
    def zero(cls, grid: Grid2D) -> "GaugeFunction":
        return cls(Field.zeros(grid), Field.zeros(grid))

    @property
    def grid(self) -> Grid2D:
        return self.psi.grid

    @property
    def laplacian(self) -> Field:
        """``Δψ``: exact when known, the five point stencil otherwise."""
        return laplacian(self.psi) if self._laplacian is None else self._laplacian

    @property
    def exact_laplacian(self) -> bool:
        return self._laplacian is not None

    def _combine(self, other: "GaugeFunction", sign: float) -> "GaugeFunction":
        if other.grid != self.grid:
            raise GridMismatch("Cannot compose gauges on different grids.")
        lap = None
        if self._laplacian is not None and other._laplacian is not None:
            lap = self._laplacian + sign * other._laplacian
        return GaugeFunction(self.psi + sign * other.psi, lap, self.tolerance + other.tolerance)

    def __add__(self, other: "GaugeFunction") -> "GaugeFunction":
        return self._combine(other, 1.0)

    def __sub__(self, other: "GaugeFunction") -> "GaugeFunction":
        return self._combine(other, -1.0)

    def __neg__(self) -> "GaugeFunction":
        return GaugeFunction(-self.psi, None if self._laplacian is None else -self._laplacian, self.tolerance)

    def __repr__(self):
        return f"GaugeFunction(max={self.psi.max_norm():.3e}, exact_laplacian={self.exact_laplacian})"


def _check_grid(psi: GaugeFunction, *fields: Field):
    if any(f.grid != psi.grid for f in fields):
        raise GridMismatch(f"Gauge on {psi.grid} does not match the coefficients.")


def apply_polynomial_gauge(a2: Nonlinearity, F2: Field, psi: GaugeFunction) -> Tuple[Nonlinearity, Field]:
    """
    The polynomial pair ``(a1, F1)`` whose solutions are ``u2 - ψ``.

    :raises WrongVariant: If ``a2`` is not a polynomial.
    :raises GridMismatch:
    """
    if a2.kind is not NonlinearityKind.POLYNOMIAL:
        raise WrongVariant(f"A polynomial gauge cannot act on a {a2.kind.value} nonlinearity.")
    _check_grid(psi, F2, *a2.coefficients)
    degree = a2.degree
    p = psi.psi

    coefficients = []
    for j in range(1, degree + 1):
        total = Field.zeros(psi.grid)
        for m in range(j, degree + 1):
            total = total + comb(m, j) * a2.coefficient(m) * p ** (m - j)
        coefficients.append(total)

    shift = Field.zeros(psi.grid)
    for m in range(1, degree + 1):
        shift = shift + a2.coefficient(m) * p ** m

    return a2.with_coefficients(coefficients), F2 - psi.laplacian - shift


def apply_exponential_gauge(q2: Field, F2: Field, psi: GaugeFunction) -> Tuple[Field, Field]:
    """``q1 = q2 e^ψ`` and ``F1 = F2 - Δψ``."""
    _check_grid(psi, q2, F2)
    return q2 * psi.psi.apply(np.exp), F2 - psi.laplacian


def gauge_twin(s: Scenario, psi: GaugeFunction) -> Scenario:
    """
    The gauge transformed scenario, with solutions ``u - ψ``. Its DN map
    agrees with that of ``s`` up to discretization error.

    :raises WrongVariant: For families without a gauge (``z e^z``, sine-Gordon).
    """
    if s.a.kind is NonlinearityKind.POLYNOMIAL:
        a1, F1 = apply_polynomial_gauge(s.a, s.F, psi)
    elif s.a.kind is NonlinearityKind.EXPONENTIAL:
        q1, F1 = apply_exponential_gauge(s.a.q, s.F, psi)
        a1 = Nonlinearity.exponential(q1)
    else:
        raise WrongVariant(f"{s.a.kind.value} nonlinearities admit no nontrivial gauge.")
    truth = None if s.truth is None else s.truth - psi.psi
    return Scenario(a1, F1, s.f0, f"{s.name}+gauge", truth)


class GaugeReport(NamedTuple):
    discrepancies: List[Optional[float]]
    """Max-norm gap between the two DN maps, per datum; ``None`` if a solve failed."""
    interior_gaps: List[Optional[float]]
    """Max-norm of ``u2 - u1 - ψ``, per datum, when ``ψ`` was supplied."""
    failures: List[Optional[str]]

    @property
    def max_discrepancy(self) -> float:
        values = [d for d in self.discrepancies if d is not None]
        return max(values) if values else float("nan")

    @property
    def complete(self) -> bool:
        return all(failure is None for failure in self.failures)


def verify_gauge_equivalence(s1: Scenario, s2: Scenario, test_data: Sequence[BoundaryField],
                             psi: GaugeFunction = None) -> GaugeReport:
    """
    Compares the DN maps of two scenarios over a batch of Dirichlet data.
    A failed solve is recorded against its datum and the batch goes on.

    :param psi: The gauge relating the pair; when given, also checks
        ``u2 = u1 + ψ`` inside.
    """
    if s1.grid != s2.grid:
        raise GridMismatch("Both scenarios must live on one grid.")
    discrepancies, gaps, failures = [], [], []
    for f in test_data:
        try:
            u1, _ = solve(s1, f)
            u2, _ = solve(s2, f)
        except SolverError as error:
            logger.warning("Gauge check of %s and %s failed on one datum: %s", s1, s2, error)
            discrepancies.append(None)
            gaps.append(None)
            failures.append(str(error))
            continue
        discrepancies.append((normal_derivative(u1) - normal_derivative(u2)).max_norm())
        gaps.append(None if psi is None else (u2 - u1 - psi.psi).max_norm())
        failures.append(None)
    return GaugeReport(discrepancies, gaps, failures)


class RefinementStudy(NamedTuple):
    sizes: List[int]
    discrepancies: List[float]
    """The largest DN discrepancy over the data, per grid size."""
    ratios: List[float]
    """Successive discrepancy ratios; about 4 for second order convergence."""
    reports: List[GaugeReport]

    def passed(self, minimum_ratio: float = 3.0, floor: float = 1e-10) -> bool:
        """True when the discrepancy either sits at round-off or keeps shrinking fast enough."""
        if not all(report.complete for report in self.reports):
            return False
        if all(d <= floor for d in self.discrepancies):
            return True
        return all(ratio >= minimum_ratio for ratio in self.ratios)


GaugePair = Tuple[Scenario, Scenario, GaugeFunction]


def boundary_family(grid: Grid2D, kind: str, count: int) -> List[BoundaryField]:
    """``fourier`` or ``hat`` boundary inputs."""
    if kind == "fourier":
        return fourier_family(grid, count)
    if kind == "hat":
        return hat_family(grid, count)
    raise ConfigurationError(f"Unknown boundary family {kind!r}.")


def gauge_refinement_study(factory: Callable[[int], GaugePair], sizes: Sequence[int], family_count: int = 8,
                           family: str = "fourier", amplitude: float = 0.1) -> RefinementStudy:
    """
    Builds a gauge pair on each grid size and records the largest DN discrepancy
    over the data ``f0 + amplitude * f_m``.

    :param factory: Maps a node count to ``(s1, s2, ψ)`` on that grid.
    """
    sizes = list(sizes)
    if any(b <= a for a, b in pairwise(sizes)):
        raise ConfigurationError(f"Refinement sizes must increase strictly, got {sizes}.")
    reports, discrepancies = [], []
    for n in sizes:
        s1, s2, psi = factory(n)
        data = [s1.f0 + amplitude * f for f in boundary_family(s1.grid, family, family_count)]
        report = verify_gauge_equivalence(s1, s2, data, psi)
        logger.info("Gauge discrepancy on %sx%s: %.3e", n, n, report.max_discrepancy)
        reports.append(report)
        discrepancies.append(report.max_discrepancy)
    ratios = [coarse / fine if fine > 0 else float("inf") for coarse, fine in pairwise(discrepancies)]
    return RefinementStudy(sizes, discrepancies, ratios, reports)


def extract_gauge(s1: Scenario, s2: Scenario, f0: BoundaryField = None, tolerance: float = None) -> GaugeFunction:
    """
    ``ψ = u2 - u1`` for the solutions at the base datum. The traces agree
    exactly; the normal derivatives agree only if the pair is gauge equivalent.

    :param tolerance: Allowed size of ``∂_ν ψ``; ``10 h²`` by default.
    :raises InvariantViolation: If the normal derivatives differ by more than the tolerance.
    """
    if s1.grid != s2.grid:
        raise GridMismatch("Both scenarios must live on one grid.")
    f0 = s1.f0 if f0 is None else f0
    tolerance = 10 * s1.grid.h ** 2 if tolerance is None else tolerance
    u1, _ = solve(s1, f0)
    u2, _ = solve(s2, f0)
    return GaugeFunction(u2 - u1, tolerance=tolerance)


class GaugeRelationReport(NamedTuple):
    coefficient_residuals: List[float]
    """Max-norm residual of the coefficient relation, for ``k = 1..N``."""
    source_residual: float

    @property
    def max_coefficient_residual(self) -> float:
        return max(self.coefficient_residuals)


def check_gauge_relations(a1: Nonlinearity, a2: Nonlinearity, F1: Field, F2: Field,
                          psi: GaugeFunction) -> GaugeRelationReport:
    """
    Residuals of the polynomial gauge relations. The source relation is
    checked with the five point Laplacian of ``ψ``.

    :raises WrongVariant: If either nonlinearity is not a polynomial.
    :raises DegreeMismatch:
    """
    if a1.kind is not NonlinearityKind.POLYNOMIAL or a2.kind is not NonlinearityKind.POLYNOMIAL:
        raise WrongVariant("Gauge relations are checked for polynomial nonlinearities.")
    if a1.degree != a2.degree:
        raise DegreeMismatch(f"Degrees differ: {a1.degree} and {a2.degree}.")
    discrete = GaugeFunction(psi.psi, laplacian(psi.psi), psi.tolerance)
    expected, source = apply_polynomial_gauge(a2, F2, discrete)
    residuals = [(a1.coefficient(k) - expected.coefficient(k)).max_norm() for k in range(1, a1.degree + 1)]
    return GaugeRelationReport(residuals, (F1 - source).max_norm())


class SineGordonReport(NamedTuple):
    dn_discrepancy: float
    phase_residual: float
    """``max |e^{iψ} - 1|`` over the nodes."""
    q_residual: float
    source_residual: float
    boundary_residual: float
    """``max |q1 cos f0 - q2 cos f0|`` on the boundary."""
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(value <= self.tolerance for value in (
            self.dn_discrepancy, self.phase_residual, self.q_residual, self.source_residual, self.boundary_residual,
        ))


def sine_gordon_uniqueness_check(s1: Scenario, s2: Scenario, f0: BoundaryField = None,
                                 tolerance: float = None) -> SineGordonReport:
    """
    For sine-Gordon pairs equal DN maps force ``q1 = q2`` and ``F1 = F2``.
    Reports every quantity the argument passes through; the pair counts as
    equivalent only when all of them are within ``tolerance`` (``10 h²`` by default).

    :raises WrongVariant: If either scenario is not sine-Gordon.
    :raises BranchAmbiguous: If ``cos f0`` vanishes on the whole boundary.
    """
    for s in (s1, s2):
        if s.a.kind is not NonlinearityKind.SINE_GORDON:
            raise WrongVariant(f"{s} is not a sine-Gordon scenario.")
    if s1.grid != s2.grid:
        raise GridMismatch("Both scenarios must live on one grid.")
    f0 = s1.f0 if f0 is None else f0
    cos_f0 = f0.apply(np.cos)
    if cos_f0.max_norm() < 1e-6:
        raise BranchAmbiguous("cos(f0) vanishes on the whole boundary; perturb the base datum.")
    tolerance = 10 * s1.grid.h ** 2 if tolerance is None else tolerance

    u1, _ = solve(s1, f0)
    u2, _ = solve(s2, f0)
    psi = (u2 - u1).values
    q1, q2 = s1.a.q, s2.a.q
    report = SineGordonReport(
        dn_discrepancy=(normal_derivative(u1) - normal_derivative(u2)).max_norm(),
        phase_residual=float(np.max(np.abs(np.exp(1j * psi) - 1))),
        q_residual=(q1 - q2).max_norm(),
        source_residual=(s1.F - s2.F).max_norm(),
        boundary_residual=(q1.trace() * cos_f0 - q2.trace() * cos_f0).max_norm(),
        tolerance=tolerance,
    )
    logger.debug("Sine-Gordon check of %s and %s: %s", s1, s2, report)
    return report
