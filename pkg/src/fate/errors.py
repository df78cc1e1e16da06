"""Exception hierarchy shared by every module of the package."""


class FateError(Exception):
    """Base class for all errors raised by this package."""

    #: 1-based pipeline step that raised, set by ``apply_pipeline``.
    step = None


class SchemaError(FateError):
    pass


class EmptyDatasetError(FateError):
    pass


class ParseError(FateError):
    pass


class InvalidFoldError(FateError):
    pass


class DegenerateGroupError(FateError):
    """A protected group or (label, group) cell needed by an operation is empty."""


class SingleClassError(FateError):
    pass


class NumericError(FateError):
    pass


class ShapeError(FateError):
    pass


class UndefinedMetricError(FateError):
    pass


class InvalidSampleError(FateError):
    pass


class ConfigError(FateError):
    pass


class SearchAbortedError(FateError):
    """Every individual of a population was disqualified."""


class CsvSchemaMismatch(FateError):
    pass
