"""
Stream models: LLR increments, simulation and information numbers.
"""

from typing import Any, Dict, Type

from ..errors import ConfigurationError
from .autoregressive import AutoregressiveModel, companion
from .base import KLCoefficients, KLPair, StreamModel
from .epidemic import EpidemicBinomialModel, EpidemicGaussianModel
from .gaussian import IIDGaussianModel
from .linear import RandomCoefficientLinearModel

MODEL_REGISTRY: Dict[str, Type[StreamModel]] = {
    IIDGaussianModel.kind: IIDGaussianModel,
    RandomCoefficientLinearModel.kind: RandomCoefficientLinearModel,
    AutoregressiveModel.kind: AutoregressiveModel,
    EpidemicBinomialModel.kind: EpidemicBinomialModel,
    EpidemicGaussianModel.kind: EpidemicGaussianModel,
}


def create_model(kind: str, **params: Any) -> StreamModel:
    """Instantiate a registered model kind."""
    try:
        model_cls = MODEL_REGISTRY[kind]
    except KeyError:
        raise ConfigurationError(
            f"unknown model kind {kind!r}; expected one of {sorted(MODEL_REGISTRY)}"
        ) from None
    return model_cls(**params)


__all__ = [
    "AutoregressiveModel",
    "EpidemicBinomialModel",
    "EpidemicGaussianModel",
    "IIDGaussianModel",
    "KLCoefficients",
    "KLPair",
    "MODEL_REGISTRY",
    "RandomCoefficientLinearModel",
    "StreamModel",
    "companion",
    "create_model",
]
