"""
JSON run configuration.

A configuration names the streams (model block + grid + optional initial
state), the prior (``rho`` or ``auto_rho``), the constraint matrix
(``beta_matrix`` or ``alpha_matrix``) and the optional window length.
``build_setup`` turns it into the objects the detector and the Monte Carlo
harness consume.
"""

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import (
    ErrorMatrix,
    GeometricPrior,
    Hyperparams,
    LinspaceAxis,
    ParameterGrid,
    ThresholdMatrix,
    hyperparams_from_beta,
)
from .detector import DetectorState
from .errors import ConfigurationError
from .models import StreamModel, create_model
from .thresholds import thresholds_from_alpha, thresholds_from_beta

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "MULTISTREAM_DETECT_OUTPUT_DIR"
LOG_LEVEL_ENV = "MULTISTREAM_DETECT_LOG_LEVEL"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "results"))


def default_log_level() -> str:
    return os.environ.get(LOG_LEVEL_ENV, "INFO").upper()


class _Block(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    def build(self) -> StreamModel:
        params = self.model_dump(exclude={"kind"}, exclude_none=True)
        return create_model(self.kind, **params)  # type: ignore[attr-defined]


class IIDGaussianBlock(_Block):
    kind: Literal["iid_gaussian"] = "iid_gaussian"
    mean: Union[float, List[float]] = 0.0
    sigma: float = 1.0


class RandomCoefficientLinearBlock(_Block):
    kind: Literal["random_coeff_linear"] = "random_coeff_linear"
    theta_star: List[List[float]]
    noise_cov: List[List[float]]
    coef_cov: Optional[List[List[float]]] = None


class AutoregressiveBlock(_Block):
    kind: Literal["ar_p"] = "ar_p"
    theta_star: Union[float, List[float]]
    noise_std: float = 1.0


class EpidemicGaussianBlock(_Block):
    kind: Literal["epidemic_gaussian"] = "epidemic_gaussian"
    p_star: float
    scale: float = 1.0
    strict: bool = True


class EpidemicBinomialBlock(_Block):
    kind: Literal["epidemic_binomial"] = "epidemic_binomial"
    p_star: float


ModelBlock = Annotated[
    Union[
        IIDGaussianBlock,
        RandomCoefficientLinearBlock,
        AutoregressiveBlock,
        EpidemicGaussianBlock,
        EpidemicBinomialBlock,
    ],
    Field(discriminator="kind"),
]


class GridSpec(BaseModel):
    """Explicit points (with optional weights) or per-coordinate linspace axes."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    points: Optional[List[Union[float, List[float]]]] = None
    weights: Optional[List[float]] = None
    linspace: Optional[List[LinspaceAxis]] = None

    @model_validator(mode="after")
    def _one_form(self) -> "GridSpec":
        if (self.points is None) == (self.linspace is None):
            raise ValueError("grid needs exactly one of 'points' or 'linspace'")
        if self.linspace is not None and self.weights is not None:
            raise ValueError("linspace grids use uniform weights")
        return self

    def build(self) -> ParameterGrid:
        if self.linspace is not None:
            return ParameterGrid.from_linspace(self.linspace)
        return ParameterGrid(points=self.points, weights=self.weights)


class StreamConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelBlock
    grid: GridSpec
    initial_state: Optional[Union[float, List[float]]] = None


class DetectorConfig(BaseModel):
    """Top-level run configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_streams: int = Field(ge=1)
    rho: Optional[float] = None
    auto_rho: bool = False
    beta_matrix: Optional[List[List[float]]] = None
    alpha_matrix: Optional[List[List[float]]] = None
    k_check: float = 2.0
    r: float = 1.0
    window: Optional[int] = None
    streams: List[StreamConfig]

    @model_validator(mode="after")
    def _consistent(self) -> "DetectorConfig":
        problems = []
        if (self.beta_matrix is None) == (self.alpha_matrix is None):
            problems.append("give exactly one of beta_matrix or alpha_matrix")
        if (self.rho is None) == (not self.auto_rho):
            problems.append("give exactly one of rho or auto_rho")
        if self.auto_rho and self.beta_matrix is None:
            problems.append("auto_rho requires beta_matrix")
        for name in ("beta_matrix", "alpha_matrix"):
            matrix = getattr(self, name)
            if matrix is not None and (
                len(matrix) != self.n_streams or any(len(row) != self.n_streams for row in matrix)
            ):
                problems.append(f"{name} must be {self.n_streams}x{self.n_streams}")
        if len(self.streams) != self.n_streams:
            problems.append(f"streams has {len(self.streams)} entries, expected {self.n_streams}")
        if self.window is not None and self.window < 1:
            problems.append("window must be at least 1")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @classmethod
    def from_json(cls, text: str) -> "DetectorConfig":
        try:
            return cls.model_validate_json(text)
        except ValidationError as e:
            problems = [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]
            raise ConfigurationError("invalid configuration", problems) from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DetectorConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read configuration {path}: {e}") from e
        config = cls.from_json(text)
        logger.info("Loaded configuration for %d streams from %s", config.n_streams, path)
        return config

    def dump(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.model_dump_json(indent=2, exclude_none=True), encoding="utf-8")
        return path

    def with_overrides(self, **overrides: Any) -> "DetectorConfig":
        """Copy with flag overrides applied and revalidated; None values are ignored."""
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        if overrides.get("rho") is not None:
            data["auto_rho"] = False
        elif overrides.get("auto_rho"):
            data["rho"] = None
        try:
            return DetectorConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError("invalid configuration override", [str(e)]) from e


@dataclass
class DetectionSetup:
    """Everything needed to run the detector on one configuration."""

    models: List[StreamModel]
    grids: List[ParameterGrid]
    prior: GeometricPrior
    thresholds: ThresholdMatrix
    initial_states: List[Any]
    window: Optional[int] = None
    beta: Optional[ErrorMatrix] = None
    hyperparams: Optional[Hyperparams] = None
    r: float = 1.0

    @property
    def n_streams(self) -> int:
        return len(self.models)

    def new_detector(self, record_trace: bool = False) -> DetectorState:
        return DetectorState(
            self.models,
            self.grids,
            self.prior,
            initial_states=self.initial_states,
            window=self.window,
            record_trace=record_trace,
        )


def _wrap(label: str, builder, *args, **kwargs):
    try:
        return builder(*args, **kwargs)
    except ValidationError as e:
        raise ConfigurationError(f"invalid {label}", [err["msg"] for err in e.errors()]) from e


def build_setup(config: DetectorConfig) -> DetectionSetup:
    """Instantiate models and grids, and calibrate the prior and thresholds."""
    models = [stream.model.build() for stream in config.streams]
    grids = [_wrap(f"grid for stream {i}", s.grid.build) for i, s in enumerate(config.streams, 1)]
    initial_states = [stream.initial_state for stream in config.streams]

    beta = None
    hp = None
    if config.beta_matrix is not None:
        beta = _wrap("beta_matrix", ErrorMatrix, entries=config.beta_matrix)
        hp = hyperparams_from_beta(beta, config.k_check, config.r)
        if config.auto_rho:
            thresholds = thresholds_from_beta(beta, hp, optimal=True)
        else:
            thresholds = thresholds_from_beta(beta, hp, rho=config.rho)
    else:
        alpha = _wrap("alpha_matrix", ErrorMatrix, entries=config.alpha_matrix)
        thresholds = thresholds_from_alpha(alpha, rho=config.rho)

    prior = _wrap("prior", GeometricPrior, rho=thresholds.rho)
    logger.info(
        "Setup: %d streams, rho=%.6g, thresholds %s, window=%s",
        len(models),
        prior.rho,
        thresholds.provenance,
        config.window,
    )
    return DetectionSetup(
        models=models,
        grids=grids,
        prior=prior,
        thresholds=thresholds,
        initial_states=initial_states,
        window=config.window,
        beta=beta,
        hyperparams=hp,
        r=config.r,
    )

