"""
Independent Gaussian observations with a mean shift.

Pre-change N(mean, sigma^2 I), post-change N(theta, sigma^2 I).
"""

from typing import Any, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError
from .base import KLPair, Observation, StreamModel


class IIDGaussianModel(StreamModel):
    """Mean-shift model; the state is empty."""

    kind = "iid_gaussian"

    def __init__(self, mean: Any = 0.0, sigma: float = 1.0):
        self._mean = np.atleast_1d(np.asarray(mean, dtype=float)).ravel()
        if not np.all(np.isfinite(self._mean)):
            raise ConfigurationError("iid_gaussian: pre-change mean must be finite")
        if not sigma > 0.0:
            raise ConfigurationError(f"iid_gaussian: sigma must be positive, got {sigma}")
        self.sigma = float(sigma)

    @property
    def dim(self) -> int:
        return self._mean.size

    @property
    def state_dim(self) -> int:
        return 0

    @property
    def theta_star(self) -> np.ndarray:
        return self._mean.copy()

    def llr_batch(self, thetas: np.ndarray, y: Observation, state: np.ndarray) -> np.ndarray:
        obs = np.atleast_1d(np.asarray(y, dtype=float))
        pre = np.sum((obs - self._mean) ** 2)
        post = np.sum((obs[None, :] - thetas) ** 2, axis=1)
        return (pre - post) / (2.0 * self.sigma**2)

    def transition(self, theta: Optional[np.ndarray], state: np.ndarray, rng: Any) -> Observation:
        mean = self._mean if theta is None else theta
        y = mean + self.sigma * np.asarray(rng.standard_normal(self.dim), dtype=float)
        return float(y[0]) if self.dim == 1 else y

    def advance(self, y: Observation, state: np.ndarray) -> np.ndarray:
        return state

    def stationarity_check(self, theta: Any) -> bool:
        vector = np.atleast_1d(np.asarray(theta, dtype=float)).ravel()
        return vector.size == self.dim and bool(np.all(np.isfinite(vector)))

    def _half_distance(self, theta: Any) -> float:
        delta = self.as_theta(theta) - self._mean
        return float(delta @ delta) / (2.0 * self.sigma**2)

    def closed_form_kl(self, theta: Any) -> KLPair:
        info = self._half_distance(theta)
        return KLPair(info, -info)

    def conditional_information(self, theta: Any, state: Any) -> Tuple[float, float]:
        info = self._half_distance(theta)
        return info, -info
