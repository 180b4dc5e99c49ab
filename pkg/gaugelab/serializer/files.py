"""
Files
-----

Reading and writing schema-backed JSON files. Output keys are sorted and
floats are written with full precision, so one input always gives the
same bytes.
"""

import json
from pathlib import Path
from typing import Any, Union

from marshmallow import Schema

from gaugelab.exceptions import ConfigurationError


class UnreadableFile(ConfigurationError):
    """Raised when a file is missing or is not valid JSON."""


def dumps(schema: Schema, obj: Any) -> str:
    return json.dumps(schema.dump(obj), sort_keys=True, indent=1) + "\n"


def dump(schema: Schema, obj: Any, path: Union[str, Path]) -> Path:
    """Serializes ``obj`` with ``schema`` to ``path``, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(schema, obj))
    return path


def read_json(path: Union[str, Path]) -> Any:
    """
    :raises UnreadableFile: If the file is missing or malformed JSON, naming the line.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as error:
        raise UnreadableFile(f"Cannot read {path}: {error.strerror}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as error:
        raise UnreadableFile(f"{path}, line {error.lineno} column {error.colno}: {error.msg}")
    return raw


def load(schema: Schema, path: Union[str, Path]) -> Any:
    """
    :raises UnreadableFile:
    :raises ~marshmallow.ValidationError: If the content does not match the schema.
    """
    return schema.load(read_json(path))
