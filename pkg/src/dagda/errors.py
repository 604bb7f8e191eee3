"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: validation/data errors -> 2,
numerical failures -> 3, configuration errors -> 1.
"""


class DagdaError(Exception):
    """Base class for all library errors."""


class ConfigError(DagdaError, ValueError):
    pass


class ValidationError(DagdaError, ValueError):
    """Input data violates a documented precondition."""


class DimensionError(ValidationError):
    pass


class DomainError(ValidationError):
    """A scalar argument lies outside its admissible range."""


class NegativeWeightError(ValidationError):
    pass


class IsolatedNodeError(ValidationError):
    """A class or attribute node has zero degree."""


class NumericalError(DagdaError, ArithmeticError):
    pass


class FormatError(ValidationError):
    """Base for malformed matrix / checkpoint files."""


class MalformedHeaderError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class DimensionOverflowError(FormatError):
    pass


class DatasetError(ValidationError):
    pass


class MissingFileError(DatasetError, FileNotFoundError):
    pass


class LabelRangeError(DatasetError):
    pass


class SplitOverlapError(DatasetError):
    pass


class ProtocolError(ValidationError):
    """Evaluation or training protocol violated (e.g. unseen label in training)."""


class MetricUndefinedError(ValidationError):
    pass
