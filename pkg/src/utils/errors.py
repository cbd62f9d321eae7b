"""
Exception hierarchy for the laboratory.

Plain argument problems raise ValueError/IndexError directly; the classes
below mark failures a caller may want to tell apart.
"""

from typing import List, Optional


class LabError(Exception):
    """Root of all laboratory-specific errors."""


class DatasetFormatError(LabError, ValueError):
    """A dataset file or directory does not match its declared format."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConfigurationError(LabError, ValueError):
    """An experiment or poisoning configuration cannot be used."""


class TrainingError(LabError, RuntimeError):
    """Training diverged."""

    def __init__(self, epoch: int, message: str = "training loss is not finite"):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")


class OptimizationError(LabError, RuntimeError):
    """A trigger reversal produced a non-finite objective."""

    def __init__(self, step: int, message: str = "objective is not finite"):
        self.step = step
        super().__init__(f"step {step}: {message}")


class UndefinedMetricError(LabError, ValueError):
    """A metric is undefined for the given input."""


class StageError(LabError, RuntimeError):
    """A pipeline stage failed."""

    def __init__(self, stage: str, message: str, cause: Optional[BaseException] = None):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {message}")


class IncompleteReportError(StageError):
    """A report was requested for a run directory with missing stages."""

    def __init__(self, missing: List[str]):
        self.missing = list(missing)
        super().__init__("report", f"missing stages: {', '.join(self.missing)}")
