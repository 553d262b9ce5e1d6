"""Diffusion-model fitting for weekly search-interest series."""

from .models import Family
from .fitting import FitConfig, FitResult, fit, fit_all
from .onset import OnsetConfig, detect_onset

__version__ = "0.1.0"

__all__ = [
    "Family",
    "FitConfig",
    "FitResult",
    "OnsetConfig",
    "detect_onset",
    "fit",
    "fit_all",
    "__version__",
]
