"""Truncated marginal likelihood-to-evidence ratio estimation.

Simulation-based inference of 1-d and 2-d marginal posteriors via
classifier ratio estimation on iteratively truncated priors, with
coverage and two-sample diagnostics against analytic reference
posteriors.
"""

from .nn import TrainConfig
from .prior import FactorizablePrior, TruncatedPrior, TruncationRegion, mass_ratio, sample_truncated
from .ratio import MarginalIndex, MarginalRatioEstimator, marginal_set, train_mnre
from .simulators import (
    EggboxSimulator,
    GaussianDiagSimulator,
    RotatedEggboxSimulator,
    TorusSimulator,
    make_simulator,
)
from .store import SampleStore
from .truncation import TmnreConfig, run_mnre, run_tmnre, shrink_region

__version__ = "0.1.0"

__all__ = [
    "FactorizablePrior",
    "TruncationRegion",
    "TruncatedPrior",
    "sample_truncated",
    "mass_ratio",
    "TrainConfig",
    "MarginalIndex",
    "MarginalRatioEstimator",
    "marginal_set",
    "train_mnre",
    "TorusSimulator",
    "EggboxSimulator",
    "RotatedEggboxSimulator",
    "GaussianDiagSimulator",
    "make_simulator",
    "SampleStore",
    "TmnreConfig",
    "run_tmnre",
    "run_mnre",
    "shrink_region",
    "__version__",
]
