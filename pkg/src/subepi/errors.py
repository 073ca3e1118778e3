"""Exception hierarchy.

Every error raised by the package derives from :class:`SubepiError`; the CLI
maps each top-level category to its own exit status via ``exit_code``.
"""


class SubepiError(Exception):
    exit_code = 1


# -- parameter / domain problems -------------------------------------------


class ParameterError(SubepiError, ValueError):
    exit_code = 3


class EpiweekRangeError(ParameterError):
    pass


class DomainError(ParameterError):
    pass


class InsufficientDataError(ParameterError):
    """Not enough history before an origin; ``deficit`` is the number of missing weeks."""

    def __init__(self, message, deficit):
        super().__init__(message)
        self.deficit = deficit


class AlignmentError(ParameterError):
    pass


class IntervalError(ParameterError):
    pass


class CoverageSetError(ParameterError):
    pass


class EmptyInputError(ParameterError):
    pass


class UndefinedSkillError(ParameterError):
    pass


class BaselineMissingError(ParameterError):
    pass


class DegreesOfFreedomError(ParameterError):
    pass


class AICcUndefinedError(DegreesOfFreedomError):
    pass


class DegenerateDesignError(ParameterError):
    pass


# -- numerical / fitting failures ------------------------------------------


class FitFailureError(SubepiError, RuntimeError):
    exit_code = 4


class NumericalBlowupError(FitFailureError, ArithmeticError):
    pass


class BootstrapFailureError(FitFailureError):
    pass


# -- input files ------------------------------------------------------------


class IngestError(SubepiError):
    exit_code = 5

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class GapError(IngestError):
    def __init__(self, message, missing):
        super().__init__(message)
        self.missing = list(missing)


class DuplicateError(IngestError):
    pass


class ValidationError(IngestError):
    pass
