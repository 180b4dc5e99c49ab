"""
Model Serializers
-----------------

Schemas for every file the lab reads or writes. Grid functions are stored
as flat arrays next to a grid header; see :data:`ORDERING` for the layout.
"""

import os
from typing import Dict, Tuple

import numpy as np
from marshmallow import Schema, ValidationError, post_load, validates_schema
from marshmallow.fields import Boolean, Constant, Dict as DictField, Float, Integer, List, Method, Nested, String
from marshmallow.validate import Length, OneOf, Range

from gaugelab.forward import Scenario, SolveReport
from gaugelab.grid import BoundaryField, Field, Grid2D
from gaugelab.linearize import ExtractionMethod, MultilinearForm
from gaugelab.nonlinearity import Nonlinearity, NonlinearityKind
from gaugelab.reconstruct.dataset import DNDataset
from gaugelab.reconstruct.results import ReconstructionResult
from .fields import ArrayField, EnumField

ORDERING = (
    "values[i * ny + j] = u(i * hx, j * hy) with i along x; "
    "boundary values counterclockwise from the origin corner"
)

COMMANDS = ("scenario", "forward", "dataset", "gauge", "reconstruct", "report")
CHAINS = ("potential", "second", "third", "polynomial", "exp_u", "sine_gordon")


def _field(grid: Grid2D, values: np.ndarray, name: str) -> Field:
    if values.size != grid.size:
        raise ValidationError(f"Expected {grid.size} values for a {grid.nx}x{grid.ny} grid, got {values.size}.", name)
    return Field(grid, values)


def _trace(grid: Grid2D, values: np.ndarray, name: str) -> BoundaryField:
    if values.size != grid.boundary_count:
        raise ValidationError(f"Expected {grid.boundary_count} boundary values, got {values.size}.", name)
    return BoundaryField(grid, values)


class GridSchema(Schema):
    nx = Integer(required=True, validate=Range(min=5))
    ny = Integer(required=True, validate=Range(min=5))
    lx = Float(required=True, validate=Range(min=0, min_inclusive=False))
    ly = Float(required=True, validate=Range(min=0, min_inclusive=False))

    @post_load
    def make_grid(self, data, **kwargs):
        return Grid2D(**data)


class FieldSchema(Schema):
    """The schema corresponding to a :class:`~gaugelab.grid.Field` file."""

    grid = Nested(GridSchema, required=True)
    ordering = Constant(ORDERING)
    values = ArrayField(required=True)

    @post_load
    def make_field(self, data, **kwargs):
        return _field(data["grid"], data["values"], "values")


class BoundaryFieldSchema(Schema):
    grid = Nested(GridSchema, required=True)
    ordering = Constant(ORDERING)
    values = ArrayField(required=True)

    @post_load
    def make_trace(self, data, **kwargs):
        return _trace(data["grid"], data["values"], "values")


class NonlinearitySchema(Schema):
    kind = EnumField(NonlinearityKind, required=True)
    coefficients = List(ArrayField(), required=True)

    @validates_schema
    def assert_coefficient_count(self, data, **kwargs):
        """Assert that only polynomials carry more than one coefficient."""
        count = len(data.get("coefficients", []))
        if count == 0:
            raise ValidationError("At least one coefficient is required.", "coefficients")
        if data.get("kind") is not NonlinearityKind.POLYNOMIAL and count != 1:
            raise ValidationError(f"A {data['kind'].value} nonlinearity takes one coefficient.", "coefficients")


class ScenarioSchema(Schema):
    """The schema corresponding to a :class:`~gaugelab.forward.Scenario` file."""

    grid = Nested(GridSchema, required=True)
    ordering = Constant(ORDERING)
    name = String(required=True)
    nonlinearity = Nested(NonlinearitySchema, attribute="a", required=True)
    source = ArrayField(attribute="F", required=True)
    base_datum = ArrayField(attribute="f0", required=True)
    truth = ArrayField(allow_none=True)

    @post_load
    def make_scenario(self, data, **kwargs):
        grid = data["grid"]
        a = data["a"]
        coefficients = [_field(grid, c, "nonlinearity") for c in a["coefficients"]]
        truth = data.get("truth")
        return Scenario(
            Nonlinearity(a["kind"], coefficients),
            _field(grid, data["F"], "source"),
            _trace(grid, data["f0"], "base_datum"),
            data["name"],
            None if truth is None else _field(grid, truth, "truth"),
        )


class SolveReportSchema(Schema):
    iterations = Integer(required=True)
    residual_history = List(Float(), required=True)
    converged = Boolean(required=True)
    damping_events = Integer(required=True)

    @post_load
    def make_report(self, data, **kwargs):
        return SolveReport(**data)


class _GridHeader:
    """Dumps the grid of an object that only reaches its grid through its fields."""

    def load_grid(self, value):
        return GridSchema().load(value)


class MultilinearFormSchema(_GridHeader, Schema):
    grid = Method("dump_grid", deserialize="load_grid", required=True)
    ordering = Constant(ORDERING)
    order = Integer(required=True, validate=OneOf([1, 2, 3]))
    inputs = List(ArrayField(), required=True)
    value = ArrayField(required=True)
    method = EnumField(ExtractionMethod, required=True)
    epsilon = Float(allow_none=True)

    def dump_grid(self, form: MultilinearForm):
        return GridSchema().dump(form.value.grid)

    @validates_schema
    def assert_order_matches_inputs(self, data, **kwargs):
        if "order" in data and "inputs" in data and data["order"] != len(data["inputs"]):
            raise ValidationError("A form of order k has exactly k inputs.", "inputs")

    @post_load
    def make_form(self, data, **kwargs):
        grid = data["grid"]
        inputs = tuple(_trace(grid, f, "inputs") for f in data["inputs"])
        return MultilinearForm(data["order"], inputs, _trace(grid, data["value"], "value"),
                               data["method"], data.get("epsilon"))


def _dump_table(table: Dict[Tuple[int, ...], BoundaryField]):
    return [{"indices": list(key), "value": [float(x) for x in table[key].values]} for key in sorted(table)]


def _load_table(value, order: int):
    if not isinstance(value, list):
        raise ValidationError("Expected a list of forms.")
    table = {}
    for entry in value:
        if not isinstance(entry, dict) or set(entry) != {"indices", "value"}:
            raise ValidationError("Each form needs exactly 'indices' and 'value'.")
        indices = entry["indices"]
        if not isinstance(indices, list) or len(indices) != order or not all(isinstance(i, int) for i in indices):
            raise ValidationError(f"Order {order} forms are indexed by {order} integers.")
        if indices != sorted(indices):
            raise ValidationError(f"Form indices {indices} must be sorted.")
        table[tuple(indices)] = ArrayField().deserialize(entry["value"])
    return table


class DNDatasetSchema(Schema):
    """The schema corresponding to a :class:`~gaugelab.reconstruct.dataset.DNDataset` file."""

    grid = Nested(GridSchema, required=True)
    ordering = Constant(ORDERING)
    f0 = ArrayField(required=True)
    inputs = List(ArrayField(), required=True)
    first = List(ArrayField(), required=True)
    second = Method("dump_second", deserialize="load_second")
    third = Method("dump_third", deserialize="load_third")
    noise = Float(required=True, validate=Range(min=0))
    method = EnumField(ExtractionMethod, required=True)
    epsilon = Float(allow_none=True)
    family = String(required=True)
    seed = Integer(required=True)

    def dump_second(self, d: DNDataset):
        return _dump_table(d.second)

    def load_second(self, value):
        return _load_table(value, 2)

    def dump_third(self, d: DNDataset):
        return _dump_table(d.third)

    def load_third(self, value):
        return _load_table(value, 3)

    @validates_schema
    def assert_indices_in_range(self, data, **kwargs):
        """Assert that every form refers to existing inputs and that outputs match inputs."""
        count = len(data.get("inputs", []))
        if "first" in data and len(data["first"]) != count:
            raise ValidationError("There must be one first order output per input.", "first")
        for name in ("second", "third"):
            for key in data.get(name, {}):
                if max(key) >= count or min(key) < 0:
                    raise ValidationError(f"Form {list(key)} refers to a missing input.", name)

    @post_load
    def make_dataset(self, data, **kwargs):
        grid = data["grid"]
        return DNDataset(
            grid,
            _trace(grid, data["f0"], "f0"),
            [_trace(grid, f, "inputs") for f in data["inputs"]],
            [_trace(grid, g, "first") for g in data["first"]],
            {key: _trace(grid, g, "second") for key, g in data.get("second", {}).items()},
            {key: _trace(grid, g, "third") for key, g in data.get("third", {}).items()},
            data["noise"], data["method"], data.get("epsilon"), data["family"], data["seed"],
        )


class ReconstructionResultSchema(_GridHeader, Schema):
    grid = Method("dump_grid", deserialize="load_grid", required=True)
    ordering = Constant(ORDERING)
    fields = DictField(keys=String(), values=ArrayField(), required=True)
    residual_history = List(Float(), required=True)
    alpha_reg = Float(required=True)
    errors = DictField(keys=String(), values=Float(), allow_none=True)
    coverage = ArrayField(allow_none=True)

    def dump_grid(self, result: ReconstructionResult):
        return GridSchema().dump(result.grid)

    @post_load
    def make_result(self, data, **kwargs):
        grid = data["grid"]
        coverage = data.get("coverage")
        return ReconstructionResult(
            {name: _field(grid, values, "fields") for name, values in data["fields"].items()},
            data["residual_history"], data["alpha_reg"], data.get("errors"),
            None if coverage is None else _field(grid, coverage, "coverage"),
        )


class SolveSummarySchema(Schema):
    """The output of a forward run: solution, DN trace, solver report and eigenvalue check."""

    grid = Nested(GridSchema, required=True)
    ordering = Constant(ORDERING)
    scenario = String(required=True)
    solution = ArrayField(required=True)
    dn_trace = ArrayField(required=True)
    report = Nested(SolveReportSchema, required=True)
    eigenvalue = Float(required=True)
    truth_error = Float(allow_none=True)


class GaugeBatchSchema(Schema):
    discrepancies = List(Float(allow_none=True, allow_nan=True), required=True)
    interior_gaps = List(Float(allow_none=True, allow_nan=True), required=True)
    failures = List(String(allow_none=True), required=True)


class GaugeReportSchema(Schema):
    """A gauge refinement study: one batch of DN discrepancies per grid size."""

    scenario = String(required=True)
    sizes = List(Integer(), required=True)
    discrepancies = List(Float(allow_nan=True), required=True)
    ratios = List(Float(allow_nan=True), required=True)
    passed = Boolean(required=True)
    reports = List(Nested(GaugeBatchSchema), required=True)


class LinearizationCheckSchema(Schema):
    order = Integer(required=True)
    indices = List(Integer(), required=True)
    epsilon = Float(required=True)
    discrepancy = Float(required=True, allow_nan=True)
    half_step_discrepancy = Float(required=True, allow_nan=True)
    ratio = Float(required=True, allow_nan=True)


class DatasetSummarySchema(Schema):
    scenario = String(required=True)
    family = String(required=True)
    order = Integer(required=True)
    forms = Integer(required=True)
    checks = List(Nested(LinearizationCheckSchema), required=True)


class BumpSchema(Schema):
    center = List(Float(), required=True, validate=Length(equal=2))
    radius = Float(required=True, validate=Range(min=0, min_inclusive=False))
    amplitude = Float(required=True)


class ExperimentConfigSchema(Schema):
    """
    The validated parameters of one command. Paths must exist, refinement
    lists must increase strictly and noise levels must be non-negative.
    """

    command = String(required=True, validate=OneOf(COMMANDS))
    scenario = String(allow_none=True)
    preset = String(allow_none=True)
    dataset = String(allow_none=True)
    input = String(allow_none=True)
    grid = Integer(validate=Range(min=5), allow_none=True)
    refine = List(Integer(validate=Range(min=5)), allow_none=True)
    family = String(validate=OneOf(["fourier", "hat"]))
    count = Integer(validate=Range(min=1))
    order = Integer(validate=OneOf([1, 2, 3]))
    method = EnumField(ExtractionMethod)
    eps = Float(validate=Range(min=0, min_inclusive=False))
    noise = Float(validate=Range(min=0))
    seed = Integer()
    alpha_reg = Float(validate=Range(min=0, min_inclusive=False), allow_none=True)
    third_inputs = Integer(validate=Range(min=1), allow_none=True)
    chain = String(validate=OneOf(CHAINS))
    prior = String(allow_none=True)
    perturb = Float(validate=Range(min=0))
    bump = Nested(BumpSchema, allow_none=True)
    workers = Integer(validate=Range(min=1))
    out = String(required=True)

    @validates_schema
    def assert_paths_exist(self, data, **kwargs):
        """Assert that every referenced input file exists."""
        for name in ("scenario", "dataset", "input", "prior"):
            path = data.get(name)
            if path is not None and not os.path.isfile(path):
                raise ValidationError(f"No such file: {path}", name)

    @validates_schema
    def assert_refinement_increasing(self, data, **kwargs):
        refine = data.get("refine")
        if refine and any(b <= a for a, b in zip(refine, refine[1:])):
            raise ValidationError("Refinement sizes must increase strictly.", "refine")

    @validates_schema
    def assert_scenario_source(self, data, **kwargs):
        """Assert that commands that need a scenario get exactly one."""
        if data.get("command") in ("scenario", "forward", "dataset", "gauge"):
            if (data.get("scenario") is None) == (data.get("preset") is None):
                raise ValidationError("Give exactly one of a scenario file or a preset name.", "scenario")

    @validates_schema
    def assert_inputs_given(self, data, **kwargs):
        if data.get("command") == "reconstruct" and data.get("dataset") is None:
            raise ValidationError("The reconstruct command reads a dataset file.", "dataset")
        if data.get("command") == "report" and data.get("input") is None:
            raise ValidationError("The report command reads a saved report.", "input")
