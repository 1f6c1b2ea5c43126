"""Wavelet-decomposed multi-branch network for wearable-sensor activity recognition."""

from .datasets import LabeledWindowSet, PerturbationSpec
from .model import MHNN, MHNNConfig, build
from .training import EvaluationReport, TrainConfig, evaluate, train
from .wavelet import FilterPair, WaveletPyramid, haar_filters, mdwd, reconstruct

__version__ = "0.1.0"

__all__ = [
    "EvaluationReport",
    "FilterPair",
    "LabeledWindowSet",
    "MHNN",
    "MHNNConfig",
    "PerturbationSpec",
    "TrainConfig",
    "WaveletPyramid",
    "build",
    "evaluate",
    "haar_filters",
    "mdwd",
    "reconstruct",
    "train",
]
