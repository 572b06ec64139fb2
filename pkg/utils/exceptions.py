"""
NumHTML - Exceptions

Error hierarchy shared by every module. Each class carries the process exit
code the command-line entry point returns when it escapes a command.
"""

from typing import Optional, Sequence


class NumHTMLError(Exception):
    """Base class for all project errors."""

    exit_code = 1

    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


class UsageError(NumHTMLError):
    """Invalid command-line usage."""

    exit_code = 2


class ValidationError(NumHTMLError):
    """Input data failed validation."""

    exit_code = 3


class ConfigurationError(ValidationError):
    """Configuration values are inconsistent or out of range."""


class CorpusFormatError(ValidationError):
    """A corpus line could not be parsed or violates the schema."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if field:
            prefix.append(f"field '{field}'")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class ContractError(NumHTMLError):
    """A function was called outside its pre-conditions."""


class DimensionError(ContractError):
    """Tensor shapes do not agree."""


class NumericError(NumHTMLError):
    """A loss or gradient became non-finite."""

    exit_code = 4

    def __init__(
        self,
        message: str,
        step: Optional[int] = None,
        lr: Optional[float] = None,
        losses: Optional[Sequence[float]] = None,
    ):
        self.step = step
        self.lr = lr
        self.losses = list(losses) if losses is not None else None
        details = []
        if step is not None:
            details.append(f"step={step}")
        if lr is not None:
            details.append(f"lr={lr:.3g}")
        if self.losses is not None:
            details.append("losses=" + ",".join(f"{v:.6g}" for v in self.losses))
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class ArtifactError(NumHTMLError):
    """A file artifact is missing, unreadable or unwritable."""

    exit_code = 5
