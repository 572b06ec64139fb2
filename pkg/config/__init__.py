"""
NumHTML - Configuration Module

This module provides layered configuration management for the pipeline.
"""

from .settings import (
    Config,
    ModelConfig,
    PretrainConfig,
    TrainingConfig,
    ParetoConfig,
    DataConfig,
    TradingConfig,
    LoggingConfig,
    SettingSources,
    load_config,
)

__all__ = [
    "Config",
    "ModelConfig",
    "PretrainConfig",
    "TrainingConfig",
    "ParetoConfig",
    "DataConfig",
    "TradingConfig",
    "LoggingConfig",
    "SettingSources",
    "load_config",
]
