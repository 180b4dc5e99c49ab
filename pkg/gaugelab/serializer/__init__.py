"""
.. autoclasstree:: gaugelab.serializer

The serializer package houses the schemas for every file the lab reads or
writes. Scenarios, datasets, reports and results all carry a grid header
and can be loaded back by any command.

.. note:: marshmallow does not play well with sphinx-autodoc, which strips
    the field declarations out of the schema definitions. Read the code of
    :mod:`gaugelab.serializer.models` for the exact layouts.
"""

from .fields import ArrayField, EnumField
from .files import UnreadableFile, dump, dumps, load, read_json
from .models import (
    BoundaryFieldSchema, DNDatasetSchema, DatasetSummarySchema, ExperimentConfigSchema, FieldSchema,
    GaugeReportSchema, GridSchema, LinearizationCheckSchema, MultilinearFormSchema, NonlinearitySchema, ORDERING,
    ReconstructionResultSchema, ScenarioSchema, SolveReportSchema, SolveSummarySchema,
)
