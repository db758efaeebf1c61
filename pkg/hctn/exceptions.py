"""
Exception hierarchy for the HCTN pipeline.

Every error carries the CLI exit code it maps to:
    1 usage / configuration, 2 data, 3 numeric.
"""


class HCTNError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class UsageError(HCTNError):
    """Bad command-line usage (unknown flag, missing argument)."""

    exit_code = 1


class ConfigurationError(HCTNError):
    """Hyperparameters or split settings that cannot be honoured."""

    exit_code = 1


class QoSDataError(HCTNError):
    """Problems with the QoS records themselves."""

    exit_code = 2


class DataParseError(QoSDataError):
    """A WSDREAM line could not be parsed."""

    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class BoundsError(QoSDataError):
    """An index falls outside the declared (n, m, T) dims."""


class EmptyDataError(QoSDataError):
    """A slice or record set is empty where data is required."""


class DimensionMismatchError(QoSDataError):
    """Data dims disagree with a checkpoint or with each other."""


class ShapeError(HCTNError):
    """Operand shapes are incompatible for a tensor op."""

    exit_code = 3

    def __init__(self, op, *shapes):
        shown = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {shown}")
        self.op = op
        self.shapes = shapes


class NumericError(HCTNError):
    """A NaN or Inf appeared in a value, gradient or parameter."""

    exit_code = 3
