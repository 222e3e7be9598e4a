"""Exception hierarchy.

Two families: bad inputs (``ValidationError``) and numerical failures
(``NumericError``). The command line maps them to exit codes 2 and 3.
"""


class KemError(Exception):
    """Base class for all package errors."""


class ValidationError(KemError, ValueError):
    """Inputs violate a documented precondition."""


class NumericError(KemError, ArithmeticError):
    """A numerical procedure failed on otherwise valid inputs."""


class IntegrationError(NumericError):
    """An SDE trajectory left the finite range."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at integration step {step}")


class DegenerateInputError(NumericError):
    """A similarity matrix has zero or non-finite row sums."""


class OutOfSupportError(NumericError):
    """A new observation has zero kernel similarity to every training sample."""


class DegenerateEvolutionError(NumericError):
    """An evolved distribution lost its normalising mass."""
