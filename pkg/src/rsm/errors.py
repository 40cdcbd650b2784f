"""Exception types. Each carries the CLI exit code it maps to."""


class RSMError(Exception):
    exit_code = 1


class InvalidInputError(RSMError, ValueError):
    """Malformed configuration or input data."""

    exit_code = 2


class DimensionMismatchError(RSMError, ValueError):
    exit_code = 3


class SubjectAbsentError(RSMError, KeyError):
    exit_code = 3

    def __init__(self, subject):
        super().__init__(subject)
        self.subject = subject

    def __str__(self):
        return f"subject absent: {self.subject}"


class NumericalError(RSMError, ArithmeticError):
    """Inference produced a singular system or non-finite state."""

    exit_code = 4

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
