"""
multistream-detect - sequential detection and identification of a change in
one of several data streams.

The detector tracks mixture and sup likelihood-ratio statistics per stream
under a geometric prior on the change point, and stops once one stream's
statistics dominate a calibrated threshold matrix.
"""

__version__ = "0.1.0"

from .core import (
    DecisionOutcome,
    ErrorMatrix,
    GeometricPrior,
    Hyperparams,
    ParameterGrid,
    ThresholdMatrix,
    alpha_embeddings,
    hyperparams_from_beta,
)
from .detector import DetectorState, decision_step, run_to_decision
from .errors import (
    ConfigurationError,
    DetectionError,
    EstimationError,
    ModelDomainError,
    NumericalError,
)
from .thresholds import thresholds_from_alpha, thresholds_from_beta

__all__ = [
    "ConfigurationError",
    "DecisionOutcome",
    "DetectionError",
    "DetectorState",
    "ErrorMatrix",
    "EstimationError",
    "GeometricPrior",
    "Hyperparams",
    "ModelDomainError",
    "NumericalError",
    "ParameterGrid",
    "ThresholdMatrix",
    "alpha_embeddings",
    "decision_step",
    "hyperparams_from_beta",
    "run_to_decision",
    "thresholds_from_alpha",
    "thresholds_from_beta",
]
