"""Curvature-aware asset ranking with root-cause paths on daily financial graphs."""

from .config import PipelineConfig, load_config
from .errors import ConfigError, DataError, RicciFlowRecError, SchemaError, StageError
from .pipeline import MarketContext, load_dataset, run_day, run_range

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig",
    "load_config",
    "MarketContext",
    "load_dataset",
    "run_day",
    "run_range",
    "RicciFlowRecError",
    "ConfigError",
    "DataError",
    "SchemaError",
    "StageError",
]
