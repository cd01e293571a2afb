"""
Abstract stream model.

A stream model knows its pre-change transition density f*, the post-change
family f_theta, how to draw one transition under either regime, and how the
stream state evolves after each observation. Models are immutable; the state
is a plain numpy array owned by whoever drives the stream.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Any, ClassVar, NamedTuple, Optional, Tuple, Union

import numpy as np

from ..errors import ConfigurationError, ObservationError

logger = logging.getLogger(__name__)

Observation = Union[float, np.ndarray]


class KLPair(NamedTuple):
    """Ergodic information numbers: j_bar >= 0 (post), j_star_bar <= 0 (pre)."""

    j_bar: float
    j_star_bar: float


class KLCoefficients(NamedTuple):
    """Affine form J_bar = intercept + slope * E|state| for state-scaled models."""

    j_intercept: float
    j_slope: float
    j_star_intercept: float
    j_star_slope: float

    def evaluate(self, abs_mean_post: float, abs_mean_pre: float) -> KLPair:
        return KLPair(
            self.j_intercept + self.j_slope * abs_mean_post,
            self.j_star_intercept + self.j_star_slope * abs_mean_pre,
        )


class StreamModel(ABC):
    """Base class for per-stream observation models."""

    kind: ClassVar[str] = ""

    @property
    @abstractmethod
    def dim(self) -> int:
        """Dimension of the parameter vector theta."""

    @property
    @abstractmethod
    def state_dim(self) -> int:
        """Length of the state vector (0 for i.i.d. models)."""

    @property
    @abstractmethod
    def theta_star(self) -> np.ndarray:
        """Pre-change parameter as a flat vector."""

    @abstractmethod
    def llr_batch(self, thetas: np.ndarray, y: Observation, state: np.ndarray) -> np.ndarray:
        """LLR increments log f_theta(y|state) - log f*(y|state) for an (m, dim) array."""

    @abstractmethod
    def transition(self, theta: Optional[np.ndarray], state: np.ndarray, rng: Any) -> Observation:
        """Draw one observation; ``theta=None`` means the pre-change regime."""

    @abstractmethod
    def advance(self, y: Observation, state: np.ndarray) -> np.ndarray:
        """State after observing ``y``."""

    @abstractmethod
    def stationarity_check(self, theta: Any) -> bool:
        """True iff theta lies in the model's admissible region."""

    @abstractmethod
    def conditional_information(self, theta: Any, state: Any) -> Tuple[float, float]:
        """One-step informations (J, J*) at parameter theta from the given state."""

    def closed_form_kl(self, theta: Any) -> Optional[Union[KLPair, KLCoefficients]]:
        """Ergodic KL pair where a closed form exists, otherwise None."""
        return None

    def state_guarded(self, state: np.ndarray) -> bool:
        """True when LLR evaluation at this state needs a numerical guard."""
        return False

    def initial_state(self, value: Any = None) -> np.ndarray:
        if self.state_dim == 0:
            return np.zeros(0)
        if value is None:
            return np.zeros(self.state_dim)
        state = np.atleast_1d(np.asarray(value, dtype=float)).ravel()
        if state.shape != (self.state_dim,):
            raise ConfigurationError(
                f"{self.kind}: initial state has length {state.size}, expected {self.state_dim}"
            )
        return state

    def as_theta(self, theta: Any) -> np.ndarray:
        """Flatten a parameter and check its dimension."""
        vector = np.atleast_1d(np.asarray(theta, dtype=float)).ravel()
        if vector.size != self.dim:
            raise ConfigurationError(
                f"{self.kind}: parameter has dimension {vector.size}, expected {self.dim}"
            )
        return vector

    def check_observation(self, y: Any) -> Observation:
        """Validate one observation, returning it in the model's native shape."""
        arr = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ObservationError(f"non-finite observation {y!r}")
        return float(arr) if arr.ndim == 0 else arr

    def llr_increment(self, theta: Any, y: Observation, state: np.ndarray) -> float:
        return float(self.llr_batch(self.as_theta(theta)[None, :], y, state)[0])

    def simulate_step(
        self, theta: Optional[Any], state: np.ndarray, rng: Any
    ) -> Tuple[Observation, np.ndarray]:
        """One Markov transition under the pre (theta=None) or post regime."""
        vector = None if theta is None else self.as_theta(theta)
        y = self.transition(vector, state, rng)
        return y, self.advance(y, state)

    def describe(self) -> str:
        return f"{self.kind}(theta*={np.array2string(self.theta_star, precision=6)})"

    def __repr__(self) -> str:
        return self.describe()


def spectral_radius(matrix: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def check_probability(name: str, value: float) -> float:
    if not (0.0 < value < 1.0) or not math.isfinite(value):
        raise ConfigurationError(f"{name} must lie in (0, 1), got {value}")
    return float(value)
