"""
Exceptions
----------

The roots of the error hierarchy. Every module raises its own
subclasses; the command line maps the roots onto exit codes.
"""


class ConfigurationError(Exception):
    """Bad input: a file, a flag, or a precondition the caller controls. Exit code 1."""

    exit_code = 1


class SolverError(Exception):
    """A numerical procedure failed to produce a result. Exit code 2."""

    exit_code = 2


class PropertyFailure(Exception):
    """A scientific check ran to completion and did not hold. Exit code 3."""

    exit_code = 3
