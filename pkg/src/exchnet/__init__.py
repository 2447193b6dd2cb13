"""Sandwich inference for Poisson regression on exchangeable count networks."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .covariance import (
    EtaEstimate,
    EtaVector,
    check_parameter_space,
    estimate_eta,
    kshorth,
    min_eigenvalue,
    psd_correct,
)
from .errors import (
    ConvergenceError,
    DataError,
    EstimationError,
    ExchnetError,
    LinkOverflowError,
    ParameterSpaceError,
    RankDeficientError,
    SamplerError,
)
from .fit import FitOptions, FitResult, fit_pml
from .inference import InferenceResult, run_inference
from .links import LinkSpec, get_link
from .relational import DyadicCovariateSpec, RelationalDataset, Term, build_design, load_dataset

__all__ = [
    "BACKEND",
    "ConvergenceError",
    "DataError",
    "DyadicCovariateSpec",
    "EstimationError",
    "EtaEstimate",
    "EtaVector",
    "ExchnetError",
    "FitOptions",
    "FitResult",
    "InferenceResult",
    "LinkOverflowError",
    "LinkSpec",
    "ParameterSpaceError",
    "RankDeficientError",
    "RelationalDataset",
    "SamplerError",
    "Term",
    "__version__",
    "build_design",
    "check_parameter_space",
    "estimate_eta",
    "fit_pml",
    "get_link",
    "kshorth",
    "load_dataset",
    "min_eigenvalue",
    "psd_correct",
    "run_inference",
]
