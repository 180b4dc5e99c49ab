import numpy as np
import pytest
from marshmallow import ValidationError

from gaugelab.grid import Grid2D
from gaugelab.linearize import ExtractionMethod, direct_form
from gaugelab.nonlinearity import NonlinearityKind
from gaugelab.reconstruct import ReconstructionResult, generate_dataset
from gaugelab.serializer import (
    ArrayField, BoundaryFieldSchema, DNDatasetSchema, EnumField, ExperimentConfigSchema, FieldSchema, GridSchema,
    MultilinearFormSchema, ORDERING, ReconstructionResultSchema, ScenarioSchema,
)


@pytest.fixture
def dataset(quadratic_scenario, fourier_inputs):
    return generate_dataset(quadratic_scenario, fourier_inputs[:3], order=2, family="fourier")


class TestFields:

    def test_array_rejects_nan(self):
        with pytest.raises(ValidationError):
            ArrayField().deserialize([1.0, float("nan")])

    def test_array_rejects_nesting(self):
        with pytest.raises(ValidationError):
            ArrayField().deserialize([[1.0], [2.0]])
        with pytest.raises(ValidationError):
            ArrayField().deserialize("1, 2")

    def test_array_length(self):
        with pytest.raises(ValidationError):
            ArrayField(length=3).deserialize([1.0, 2.0])

    def test_enum(self):
        field = EnumField(NonlinearityKind)
        assert field.deserialize("sine_gordon") is NonlinearityKind.SINE_GORDON
        assert field.serialize("kind", {"kind": NonlinearityKind.EXPONENTIAL}) == "exponential"
        with pytest.raises(ValidationError):
            field.deserialize("cosine")

    def test_enum_is_written_by_value(self):
        field = EnumField(ExtractionMethod)
        assert field.deserialize("direct_solve") is ExtractionMethod.DIRECT_SOLVE
        with pytest.raises(ValidationError):
            field.deserialize("DIRECT_SOLVE")


class TestGridFunctions:

    def test_grid(self, rectangle):
        assert GridSchema().load(GridSchema().dump(rectangle)) == rectangle
        with pytest.raises(ValidationError):
            GridSchema().load({"nx": 4, "ny": 9, "lx": 1.0, "ly": 1.0})

    def test_field_layout(self, rectangle):
        """Assert that fields are stored flat in matrix order with the layout spelled out."""
        from gaugelab.grid import Field
        field = Field.from_function(rectangle, lambda x, y: x + 10 * y)
        data = FieldSchema().dump(field)
        assert data["ordering"] == ORDERING
        assert data["values"][1] == pytest.approx(10 * rectangle.hy)
        assert data["values"][rectangle.ny] == pytest.approx(rectangle.hx)
        assert np.array_equal(FieldSchema().load(data).values, field.values)

    def test_wrong_size(self, smooth_field):
        data = FieldSchema().dump(smooth_field)
        data["values"] = data["values"][:-1]
        with pytest.raises(ValidationError) as error:
            FieldSchema().load(data)
        assert "values" in error.value.messages

    def test_trace(self, unit_trace):
        data = BoundaryFieldSchema().dump(unit_trace)
        assert len(data["values"]) == unit_trace.grid.boundary_count
        with pytest.raises(ValidationError):
            FieldSchema().load(data)


class TestScenario:

    def test_keys(self, quadratic_scenario):
        data = ScenarioSchema().dump(quadratic_scenario)
        assert {"grid", "name", "nonlinearity", "source", "base_datum", "truth"} <= set(data)
        assert data["nonlinearity"]["kind"] == "polynomial"
        assert len(data["nonlinearity"]["coefficients"]) == 2
        assert data["truth"] is None

    def test_reload(self, manufactured_scenario):
        s = ScenarioSchema().load(ScenarioSchema().dump(manufactured_scenario))
        assert s.name == "manufactured_cubic"
        assert s.a.kind is NonlinearityKind.POLYNOMIAL
        assert np.array_equal(s.F.values, manufactured_scenario.F.values)
        assert np.array_equal(s.truth.values, manufactured_scenario.truth.values)

    def test_coefficient_count(self, exponential_scenario):
        data = ScenarioSchema().dump(exponential_scenario)
        data["nonlinearity"]["coefficients"] *= 2
        with pytest.raises(ValidationError) as error:
            ScenarioSchema().load(data)
        assert "nonlinearity" in error.value.messages

    def test_unknown_key(self, quadratic_scenario):
        data = ScenarioSchema().dump(quadratic_scenario)
        data["colour"] = "blue"
        with pytest.raises(ValidationError):
            ScenarioSchema().load(data)


class TestDataset:

    def test_tables(self, dataset):
        """Assert that higher order forms are stored as sorted index lists."""
        data = DNDatasetSchema().dump(dataset)
        assert [entry["indices"] for entry in data["second"]] == [[0, 0], [0, 1], [0, 2], [1, 1], [1, 2], [2, 2]]
        assert data["third"] == []
        assert data["method"] == "direct_solve"

    def test_reload(self, dataset):
        loaded = DNDatasetSchema().load(DNDatasetSchema().dump(dataset))
        assert loaded.grid == dataset.grid
        assert sorted(loaded.second) == sorted(dataset.second)
        assert np.array_equal(loaded.form(1, 2).values, dataset.form(1, 2).values)
        assert loaded.family == "fourier"

    def test_index_out_of_range(self, dataset):
        data = DNDatasetSchema().dump(dataset)
        data["second"][0]["indices"] = [0, 7]
        with pytest.raises(ValidationError):
            DNDatasetSchema().load(data)

    def test_unsorted_indices(self, dataset):
        data = DNDatasetSchema().dump(dataset)
        data["second"][1]["indices"] = [1, 0]
        with pytest.raises(ValidationError):
            DNDatasetSchema().load(data)

    def test_missing_output(self, dataset):
        data = DNDatasetSchema().dump(dataset)
        data["first"] = data["first"][:-1]
        with pytest.raises(ValidationError):
            DNDatasetSchema().load(data)


class TestForm:

    def test_reload(self, quadratic_scenario, fourier_inputs):
        form = direct_form(quadratic_scenario, quadratic_scenario.f0, fourier_inputs[1:3])
        loaded = MultilinearFormSchema().load(MultilinearFormSchema().dump(form))
        assert loaded.order == 2
        assert loaded.method is ExtractionMethod.DIRECT_SOLVE
        assert np.array_equal(loaded.value.values, form.value.values)

    def test_order_matches_inputs(self, quadratic_scenario, fourier_inputs):
        data = MultilinearFormSchema().dump(direct_form(quadratic_scenario, quadratic_scenario.f0, fourier_inputs[1:3]))
        data["order"] = 3
        with pytest.raises(ValidationError):
            MultilinearFormSchema().load(data)


def test_result_reload(smooth_field):
    result = ReconstructionResult({"Q": smooth_field}, [1.0, 0.1], 1e-6, {"Q": 0.05}, smooth_field)
    loaded = ReconstructionResultSchema().load(ReconstructionResultSchema().dump(result))
    assert loaded.grid == smooth_field.grid
    assert loaded.errors == {"Q": 0.05}
    assert np.array_equal(loaded.coverage.values, smooth_field.values)


class TestExperimentConfig:

    def test_minimal(self, tmp_path):
        options = ExperimentConfigSchema().load({"command": "scenario", "preset": "laplace", "out": str(tmp_path)})
        assert options["preset"] == "laplace"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError) as error:
            ExperimentConfigSchema().load({"command": "reconstruct", "dataset": str(tmp_path / "no.json"),
                                           "out": str(tmp_path)})
        assert "dataset" in error.value.messages

    def test_refinement(self, tmp_path):
        with pytest.raises(ValidationError) as error:
            ExperimentConfigSchema().load({"command": "gauge", "preset": "laplace", "refine": [17, 17],
                                           "out": str(tmp_path)})
        assert "refine" in error.value.messages

    def test_one_scenario_source(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text("{}")
        with pytest.raises(ValidationError):
            ExperimentConfigSchema().load({"command": "forward", "preset": "laplace", "scenario": str(path),
                                           "out": str(tmp_path)})

    def test_unknown_command(self, tmp_path):
        with pytest.raises(ValidationError):
            ExperimentConfigSchema().load({"command": "plot", "out": str(tmp_path)})


def test_grid_equality_survives_json():
    grid = Grid2D(9, 13, lx=2.0, ly=1.5)
    assert GridSchema().load(GridSchema().dump(grid)) == grid
