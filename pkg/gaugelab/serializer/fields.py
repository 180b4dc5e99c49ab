"""
Fields
-------

Additional fields so that the schemas can serialize numpy arrays,
grid functions and enums to and from plain JSON values.
"""

from enum import Enum
from typing import Optional, Type, Union

import numpy as np
from marshmallow import ValidationError, fields

from gaugelab.grid import BoundaryField, Field


class ArrayField(fields.Field):
    """
    Serializes a numpy array (or the values of a grid function) to a flat
    list of floats in row-major order, and de-serializes it back to a
    one dimensional :class:`numpy.ndarray`. Rejects NaN and infinities.
    """

    def __init__(self, *args, length: Optional[int] = None, **kwargs):
        """
        :param length: The exact number of values, when it is known up front.
        """
        super().__init__(*args, **kwargs)
        self.length = length

    def _serialize(self, value: Union[np.ndarray, Field, BoundaryField], attr, obj, **kwargs):
        if value is None:
            return None
        if isinstance(value, (Field, BoundaryField)):
            value = value.values
        return [float(x) for x in np.ravel(value)]

    def _deserialize(self, value, attr, data, **kwargs) -> np.ndarray:
        if not isinstance(value, (list, tuple)):
            raise ValidationError(f"Expected a list of numbers, got {type(value).__name__}.")
        try:
            array = np.array(value, dtype=float)
        except (TypeError, ValueError):
            raise ValidationError("Array contains values that are not numbers.")
        if array.ndim != 1:
            raise ValidationError("Arrays are stored flat.")
        if not np.all(np.isfinite(array)):
            raise ValidationError("Array contains NaN or infinite values.")
        if self.length is not None and array.size != self.length:
            raise ValidationError(f"Expected {self.length} values, got {array.size}.")
        return array


class EnumField(fields.Field):
    """
    A field that serializes an :class:`~enum.Enum` to a :class:`str` and back.
    """

    def __init__(self, enum_type: Type[Enum], *args, **kwargs):
        """
        :param enum_type: the :class:`~enum.Enum` subclass, written by value
        """
        if not issubclass(enum_type, Enum):
            raise ValidationError(f"Expected enum type, got {type(enum_type)} instead")
        super().__init__(*args, **kwargs)
        self._enum_type = enum_type

    def _serialize(self, value: Union[Enum, str], attr, obj, **kwargs):
        """Converts an enum to a string representation."""
        if isinstance(value, self._enum_type):
            return value.value
        if isinstance(value, str) and value in (e.value for e in self._enum_type):
            return value
        return None

    def _deserialize(self, value: str, attr, data, **kwargs) -> Enum:
        """Converts a string back to the enum type."""
        try:
            return self._enum_type(value)
        except ValueError:
            raise ValidationError(f"{value!r} is not one of {[e.value for e in self._enum_type]}.")
