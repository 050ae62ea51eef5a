# retypelab/core/errors.py - Exception hierarchy shared by every stage
from typing import Optional


class RetypelabError(Exception):
    """Base class for all errors raised by the toolkit."""

    exit_code = 1


class ValidationError(RetypelabError, ValueError):
    """Bad input: malformed files, inconsistent configuration, schema mismatches."""

    exit_code = 2


class PipelineRuntimeError(RetypelabError):
    """A well-formed request that could not be carried out."""

    exit_code = 3


class ListingSyntaxError(ValidationError):
    def __init__(self, message: str, line: int, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class UnknownMnemonicError(ListingSyntaxError):
    pass


class DuplicateFunctionError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class DatasetSchemaError(ValidationError):
    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column!r}")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class ClassTooSmallError(ValidationError):
    pass


class FingerprintMismatchError(ValidationError):
    pass


class UnsupportedOperationError(ValidationError):
    pass


class GridCapExceededError(ValidationError):
    pass


class FeatureSelectionError(PipelineRuntimeError):
    pass


class ModelFileError(PipelineRuntimeError):
    pass


class ConvergenceError(PipelineRuntimeError):
    pass


class RuleMiningError(ValidationError):
    pass
