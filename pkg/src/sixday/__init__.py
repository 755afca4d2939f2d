"""Six-day race results analytics and Bayesian record forecasting."""

from .racedata import Dataset, PerformanceRecord, RaceEvent, filter_dataset, parse_results, write_results
from .sampler import SamplerConfig

__all__ = [
    "Dataset",
    "PerformanceRecord",
    "RaceEvent",
    "SamplerConfig",
    "filter_dataset",
    "parse_results",
    "write_results",
]

__version__ = "0.1.0"
