"""
Core domain types for multistream-detect.

Holds the geometric change-point prior, parameter grids, error and threshold
matrices, decision outcomes, and the hyperparameter schedules derived from a
constraint matrix. Every type here is an immutable pydantic model.
"""

import logging
import math
from itertools import product
from typing import List, Literal, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigurationError, NumericalError

logger = logging.getLogger(__name__)

Provenance = Literal["from_alpha", "from_beta", "optimal", "manual"]


class GeometricPrior(BaseModel):
    """Geometric prior on the change point: mass(k) = rho (1 - rho)^k."""

    model_config = ConfigDict(frozen=True)

    rho: float

    @field_validator("rho")
    @classmethod
    def _check_rho(cls, value: float) -> float:
        if not (0.0 < value < 1.0):
            raise ValueError(f"rho must lie in (0, 1), got {value}")
        return value

    @property
    def log_rho(self) -> float:
        return math.log(self.rho)

    @property
    def log_survival(self) -> float:
        """log(1 - rho)."""
        return math.log(1.0 - self.rho)

    def mass(self, k: int) -> float:
        return self.rho * (1.0 - self.rho) ** k

    def tail(self, n: int) -> float:
        return (1.0 - self.rho) ** n

    def log_mass(self, k):
        """Log mass for an integer or an integer array."""
        return self.log_rho + k * self.log_survival

    def log_tail(self, n: int) -> float:
        return n * self.log_survival


def prior_mass(prior: GeometricPrior, k: int) -> float:
    """Probability that the change happens right after sample k."""
    if k < 0:
        raise ConfigurationError(f"change-point index must be nonnegative, got {k}")
    return prior.mass(k)


def prior_tail(prior: GeometricPrior, n: int) -> float:
    """Prior probability that the change point is at or after n."""
    if n < 0:
        raise ConfigurationError(f"tail index must be nonnegative, got {n}")
    return prior.tail(n)


class LinspaceAxis(BaseModel):
    """One coordinate axis of a Cartesian grid: ``count`` points from lo to hi."""

    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float
    count: int = Field(ge=1)

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


class ParameterGrid(BaseModel):
    """
    Finite support of the post-change parameter mixture for one stream.

    ``points`` holds parameter vectors (scalars are stored as 1-vectors) and
    ``weights`` the mixture probabilities, strictly positive and summing to 1.
    """

    model_config = ConfigDict(frozen=True)

    points: List[List[float]]
    weights: List[float]

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data):
        if isinstance(data, dict):
            points = data.get("points")
            if points is not None:
                points = [
                    list(p) if isinstance(p, (list, tuple, np.ndarray)) else [p] for p in points
                ]
                data = {**data, "points": [[float(v) for v in p] for p in points]}
                if data.get("weights") is None and points:
                    data["weights"] = [1.0 / len(points)] * len(points)
        return data

    @model_validator(mode="after")
    def _check(self) -> "ParameterGrid":
        if not self.points:
            raise ValueError("parameter grid is empty")
        dims = {len(p) for p in self.points}
        if len(dims) != 1 or 0 in dims:
            raise ValueError("grid points must share one nonzero dimension")
        if len(self.weights) != len(self.points):
            raise ValueError("grid weights and points differ in length")
        if any(not (w > 0.0) for w in self.weights):
            raise ValueError("grid weights must be strictly positive")
        if abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise ValueError("grid weights must sum to 1")
        if len({tuple(p) for p in self.points}) != len(self.points):
            raise ValueError("grid points must be pairwise distinct")
        return self

    @classmethod
    def uniform(cls, points: Sequence) -> "ParameterGrid":
        return cls(points=list(points))

    @classmethod
    def from_linspace(cls, axes: Sequence[LinspaceAxis]) -> "ParameterGrid":
        """Cartesian product of per-coordinate linspace axes, uniform weights."""
        if not axes:
            raise ConfigurationError("linspace grid needs at least one axis")
        columns = [axis.values() for axis in axes]
        return cls(points=[[float(v) for v in combo] for combo in product(*columns)])

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return len(self.points[0])

    @property
    def array(self) -> np.ndarray:
        """Points as an (m, d) float array."""
        return np.asarray(self.points, dtype=float)

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(np.asarray(self.weights, dtype=float))


def _square(entries: List[List[float]]) -> int:
    n = len(entries)
    if n == 0 or any(len(row) != n for row in entries):
        raise ValueError("matrix must be square and nonempty")
    return n


class ErrorMatrix(BaseModel):
    """
    N x N matrix of error probabilities (beta or alpha constraints).

    Entries must lie strictly inside (0, 1). An embedding may produce entries
    at or above 1; such a matrix is built with ``degenerate=True`` and only the
    positivity check applies.
    """

    model_config = ConfigDict(frozen=True)

    entries: List[List[float]]
    degenerate: bool = False

    @model_validator(mode="after")
    def _check(self) -> "ErrorMatrix":
        _square(self.entries)
        for i, row in enumerate(self.entries):
            for j, value in enumerate(row):
                if not math.isfinite(value) or value <= 0.0:
                    raise ValueError(f"entry ({i + 1},{j + 1}) = {value} must be positive")
                if value >= 1.0 and not self.degenerate:
                    raise ValueError(f"entry ({i + 1},{j + 1}) = {value} must be below 1")
        return self

    @classmethod
    def from_pattern(cls, n: int, epsilon: float) -> "ErrorMatrix":
        """The epsilon/(i + j) constraint pattern with 1-based indices."""
        return cls(entries=[[epsilon / (i + j) for j in range(1, n + 1)] for i in range(1, n + 1)])

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=float)

    @property
    def max(self) -> float:
        return max(max(row) for row in self.entries)

    @property
    def min(self) -> float:
        return min(min(row) for row in self.entries)

    @property
    def trace(self) -> float:
        return math.fsum(self.entries[i][i] for i in range(self.n))


class ThresholdMatrix(BaseModel):
    """Positive N x N threshold matrix A with its calibration provenance."""

    model_config = ConfigDict(frozen=True)

    entries: List[List[float]]
    provenance: Provenance = "manual"
    rho: Optional[float] = None

    @model_validator(mode="after")
    def _check(self) -> "ThresholdMatrix":
        _square(self.entries)
        for i, row in enumerate(self.entries):
            for j, value in enumerate(row):
                if not value > 0.0:
                    raise ValueError(f"threshold ({i + 1},{j + 1}) = {value} must be positive")
        return self

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=float)

    @property
    def log_entries(self) -> np.ndarray:
        return np.log(self.array)


class Hyperparams(BaseModel):
    """Schedules derived from a constraint matrix beta."""

    model_config = ConfigDict(frozen=True)

    rho_beta: float
    m_star: int = Field(ge=1)
    k_star: int = Field(ge=1)
    k_check: float
    rho_opt: float
    r: float = 1.0

    @model_validator(mode="after")
    def _check(self) -> "Hyperparams":
        if self.m_star >= self.k_star:
            raise ValueError(f"m_star={self.m_star} must be below k_star={self.k_star}")
        if self.k_check <= 1.0:
            raise ValueError("k_check must exceed 1")
        if self.r < 1.0:
            raise ValueError("moment order r must be at least 1")
        return self


class DecisionOutcome(BaseModel):
    """Result of running the stopping rule: stop time T and identified stream d."""

    model_config = ConfigDict(frozen=True)

    stopped: bool
    time: int = Field(ge=0)
    stream: Optional[int] = None
    statistic_snapshot: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _check(self) -> "DecisionOutcome":
        if self.stopped and self.stream is None:
            raise ValueError("a stopped outcome must name a stream")
        if not self.stopped and self.stream is not None:
            raise ValueError("a no-decision outcome cannot name a stream")
        return self

    def to_record(self) -> dict:
        """JSON decision record ``{stopped, T, d, snapshot}``."""
        return {
            "stopped": self.stopped,
            "T": self.time,
            "d": self.stream,
            "snapshot": self.statistic_snapshot,
        }


def hyperparams_from_beta(beta: ErrorMatrix, k_check: float = 2.0, r: float = 1.0) -> Hyperparams:
    """
    Derive rho_beta, m*, k* and rho_opt from the constraint matrix.

    rho_beta = 1/(1 + |log beta_max|), m* = floor(|log beta_min| / rho_beta),
    k* = floor(k_check m*), and
    rho_opt = |log beta_max| rho_beta / (|log beta_min| (1 + |log rho_beta|)).
    """
    if beta.degenerate or beta.max >= 1.0 or beta.min <= 0.0:
        raise ConfigurationError("beta entries must lie strictly inside (0, 1)")
    if not k_check > 1.0:
        raise ConfigurationError(f"k_check must exceed 1, got {k_check}")

    log_max = abs(math.log(beta.max))
    log_min = abs(math.log(beta.min))
    rho_beta = 1.0 / (1.0 + log_max)
    m_star = int(math.floor(log_min / rho_beta))
    k_star = int(math.floor(k_check * m_star))
    rho_opt = log_max * rho_beta / (log_min * (1.0 + abs(math.log(rho_beta))))

    if m_star < 1 or k_star <= m_star:
        raise ConfigurationError(
            f"schedules degenerate for this beta and k_check: m*={m_star}, k*={k_star}"
        )

    hp = Hyperparams(
        rho_beta=rho_beta, m_star=m_star, k_star=k_star, k_check=k_check, rho_opt=rho_opt, r=r
    )
    logger.debug("Hyperparameters: %s", hp)
    return hp


class AlphaEmbeddings(NamedTuple):
    alpha1: ErrorMatrix
    alpha2: ErrorMatrix


def alpha_embeddings(
    beta: ErrorMatrix, hp: Hyperparams, rho: Optional[float] = None
) -> AlphaEmbeddings:
    """
    The two alpha matrices sandwiching the beta-constrained class.

    alpha1 scales beta by (1 - rho)^k* / (1 + tr beta), with an extra rho on the
    off-diagonal; alpha2 adds (1 - rho)^(m*+1) on the diagonal and
    (1 - rho)^(k*+1) off it. ``rho`` defaults to ``hp.rho_opt``.
    """
    rho = hp.rho_opt if rho is None else rho
    if not (0.0 < rho < 1.0):
        raise ConfigurationError(f"rho must lie in (0, 1), got {rho}")

    b = beta.array
    n = beta.n
    scale = (1.0 - rho) ** hp.k_star / (1.0 + beta.trace)
    diag = np.eye(n, dtype=bool)

    a1 = np.where(diag, b * scale, b * rho * scale)
    a2 = np.where(diag, b + (1.0 - rho) ** (hp.m_star + 1), b + (1.0 - rho) ** (hp.k_star + 1))

    if np.any(a1 >= 1.0) or np.any(a1 <= 0.0):
        raise NumericalError("alpha1 embedding is degenerate (entries outside (0, 1))")

    degenerate = bool(np.any(a2 >= 1.0))
    if degenerate:
        logger.warning("alpha2 embedding has entries >= 1 for rho=%.6g; flagged degenerate", rho)

    return AlphaEmbeddings(
        alpha1=ErrorMatrix(entries=a1.tolist()),
        alpha2=ErrorMatrix(entries=a2.tolist(), degenerate=degenerate),
    )
