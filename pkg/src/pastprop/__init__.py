"""LSTM forecasting whose backward pass also corrects the training series."""
from .data import AnomalySpec, NormalizationParams, SplitSpec, TimeSeriesRecord
from .engine import PastpropConfig, TrainingOutcome, Variant, train
from .lstm import LstmDims, LstmWeights

__all__ = [
    "AnomalySpec", "LstmDims", "LstmWeights", "NormalizationParams", "PastpropConfig",
    "SplitSpec", "TimeSeriesRecord", "TrainingOutcome", "Variant", "train",
]
