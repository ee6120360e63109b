"""SSIM, Gaussian-process surrogate and segment-wise overlay tuning."""
from .gp import GaussianProcess, expected_improvement, matern52
from .ssim import SsimConfig, ssim, ssim_map
from .tuning import (DocumentTuneResult, SearchSpace, TuneError, TuneReport, tune_document, tune_segment,
                     write_trace_csv)

__all__ = [
    "DocumentTuneResult", "GaussianProcess", "SearchSpace", "SsimConfig", "TuneError", "TuneReport",
    "expected_improvement", "matern52", "ssim", "ssim_map", "tune_document", "tune_segment", "write_trace_csv",
]
