"""Decomposable hybrid time-series forecasting.

Interpretable components (piecewise-linear trend, Fourier seasonality,
events, future regressors) combined with AR-Net auto-regression and lagged
covariates, trained by mini-batch gradient descent.
"""

from .config import ModelConfig, TrainConfig
from .data import TimeSeries, read_csv
from .model import FittedModel
from .train import fit

__all__ = ["ModelConfig", "TrainConfig", "TimeSeries", "FittedModel", "fit", "read_csv"]
__version__ = "0.1.0"
