"""
Results
-------

The outcome of an inversion: the recovered fields by name, the residual
history, the regularization weight, and relative errors against a known
truth when one is available.
"""

from typing import Dict, List, NamedTuple, Optional

import numpy as np

from gaugelab.grid import Field, GridMismatch, quadrature_weights


def relative_l2_error(recovered: Field, truth: Field) -> float:
    """
    ``‖recovered - truth‖ / ‖truth‖`` in the trapezoid L² norm over the
    interior nodes, where recovered fields are determined. Falls back to
    the absolute error when the truth vanishes.
    """
    if recovered.grid != truth.grid:
        raise GridMismatch("Recovered field and truth live on different grids.")
    weights = quadrature_weights(truth.grid)[1:-1, 1:-1]
    difference = (recovered.values - truth.values)[1:-1, 1:-1]
    error = float(np.sqrt(np.sum(weights * difference ** 2)))
    scale = float(np.sqrt(np.sum(weights * truth.values[1:-1, 1:-1] ** 2)))
    return error / scale if scale > 0 else error


class ReconstructionResult(NamedTuple):
    fields: Dict[str, Field]
    """Recovered fields by name: ``Q``, ``T2``, ``T3``, ``q``, ``u0``, ``F``, ``a1``, ..."""
    residual_history: List[float]
    alpha_reg: float
    errors: Optional[Dict[str, float]] = None
    """Relative L² errors per field, for fields with a known truth."""
    coverage: Optional[Field] = None
    """Normalized column sensitivity of the last linear inversion; small values mark unconstrained nodes."""

    @property
    def grid(self):
        return next(iter(self.fields.values())).grid

    def compared_to(self, truth: Dict[str, Field]) -> "ReconstructionResult":
        """A copy carrying the relative errors of every field that has a truth."""
        errors = dict(self.errors or {})
        for name, field in self.fields.items():
            if name in truth:
                errors[name] = relative_l2_error(field, truth[name])
        return self._replace(errors=errors)

    def merged(self, other: "ReconstructionResult") -> "ReconstructionResult":
        """Combines the fields of two stages of one pipeline; later stages win."""
        errors = {**(self.errors or {}), **(other.errors or {})} or None
        return ReconstructionResult(
            {**self.fields, **other.fields},
            self.residual_history + other.residual_history,
            other.alpha_reg,
            errors,
            other.coverage if other.coverage is not None else self.coverage,
        )
