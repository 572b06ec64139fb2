"""
NumHTML - Utilities Module

This module contains utility functions for logging, validation and errors.
"""

from .logger import setup_logger
from .exceptions import (
    NumHTMLError,
    UsageError,
    ValidationError,
    ConfigurationError,
    CorpusFormatError,
    ContractError,
    DimensionError,
    NumericError,
    ArtifactError,
)
from .validators import (
    AUDIO_FEATURE_COUNT,
    SUPPORTED_HORIZONS,
    validate_audio_vector,
    validate_price_series,
    validate_horizons,
    validate_positive,
    collect_errors,
)

__all__ = [
    "setup_logger",
    "NumHTMLError",
    "UsageError",
    "ValidationError",
    "ConfigurationError",
    "CorpusFormatError",
    "ContractError",
    "DimensionError",
    "NumericError",
    "ArtifactError",
    "AUDIO_FEATURE_COUNT",
    "SUPPORTED_HORIZONS",
    "validate_audio_vector",
    "validate_price_series",
    "validate_horizons",
    "validate_positive",
    "collect_errors",
]
