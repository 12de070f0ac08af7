"""Exception hierarchy shared by every module."""

from __future__ import annotations


class SynthAllocError(Exception):
    """Base class; the CLI maps these to exit code 1 plus an error JSON."""

    kind = "error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class SchemaError(SynthAllocError):
    kind = "schema"

    def __init__(self, message: str, column: str | None = None):
        super().__init__(message)
        self.column = column

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["column"] = self.column
        return d


class DataError(SynthAllocError):
    kind = "data"

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["row"] = self.row
        return d


class EmptyIntersectionError(DataError):
    kind = "empty_intersection"


class InsufficientDataError(SynthAllocError):
    kind = "insufficient_data"


class EmptyWindowError(SynthAllocError):
    kind = "empty_window"


class ShapeError(SynthAllocError, ValueError):
    kind = "shape"


class ParameterError(SynthAllocError, ValueError):
    kind = "parameter"


class NumericError(SynthAllocError, ArithmeticError):
    kind = "numeric"


class TrainingError(NumericError):
    """Non-finite loss during adversarial training."""

    kind = "training"

    def __init__(self, message: str, epoch: int | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.diagnostics = diagnostics or {}

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["epoch"] = self.epoch
        d["diagnostics"] = self.diagnostics
        return d


class PipelineError(SynthAllocError):
    """A stage of the synthetic-data pipeline failed; ``stage`` names it."""

    kind = "pipeline"

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["stage"] = self.stage
        return d


class TotalLossError(SynthAllocError):
    kind = "total_loss"


class ConfigError(SynthAllocError):
    kind = "config"
