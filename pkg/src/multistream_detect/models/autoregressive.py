"""
Scalar autoregressive model of order p.

    X_n = theta' Phi_{n-1} + sigma w_n,   Phi_n = (X_n, ..., X_{n-p+1})

The stream state is the stacked vector Phi, updated by shift-and-insert.
A change replaces the coefficient vector theta* by theta.
"""

import logging
from typing import Any, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError, NumericalError
from .base import KLPair, Observation, StreamModel, spectral_radius

logger = logging.getLogger(__name__)

LYAPUNOV_TOL = 1e-12
LYAPUNOV_MAX_ITER = 100_000


def companion(theta: np.ndarray) -> np.ndarray:
    """Companion matrix: first row theta, ones on the subdiagonal."""
    p = theta.size
    matrix = np.zeros((p, p))
    matrix[0, :] = theta
    if p > 1:
        matrix[1:, :-1] = np.eye(p - 1)
    return matrix


class AutoregressiveModel(StreamModel):
    kind = "ar_p"

    def __init__(self, theta_star: Any, noise_std: float = 1.0):
        self._theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float)).ravel()
        if not noise_std > 0.0:
            raise ConfigurationError(f"ar_p: noise_std must be positive, got {noise_std}")
        self.noise_std = float(noise_std)
        if not self.stationarity_check(self._theta_star):
            raise ConfigurationError("ar_p: theta_star is not in the stationarity region")

    @property
    def dim(self) -> int:
        return self._theta_star.size

    @property
    def state_dim(self) -> int:
        return self._theta_star.size

    @property
    def theta_star(self) -> np.ndarray:
        return self._theta_star.copy()

    def llr_batch(self, thetas: np.ndarray, y: Observation, state: np.ndarray) -> np.ndarray:
        obs = float(np.asarray(y, dtype=float).reshape(-1)[0])
        mean = thetas @ state
        mean_star = float(self._theta_star @ state)
        return (obs * (mean - mean_star) + 0.5 * (mean_star**2 - mean**2)) / self.noise_std**2

    def transition(self, theta: Optional[np.ndarray], state: np.ndarray, rng: Any) -> Observation:
        coef = self._theta_star if theta is None else theta
        return float(coef @ state) + self.noise_std * float(rng.standard_normal())

    def advance(self, y: Observation, state: np.ndarray) -> np.ndarray:
        return np.concatenate(([float(y)], state[:-1]))

    def stationarity_check(self, theta: Any) -> bool:
        vector = np.atleast_1d(np.asarray(theta, dtype=float)).ravel()
        return spectral_radius(companion(vector)) < 1.0

    def stationary_covariance(self, theta: Any) -> np.ndarray:
        """Stationary covariance F of Phi, solving F = L F L' + sigma^2 e1 e1'."""
        vector = self.as_theta(theta)
        if not self.stationarity_check(vector):
            raise ConfigurationError(f"ar_p: theta={vector} is not stationary")
        lam = companion(vector)
        forcing = np.zeros((self.dim, self.dim))
        forcing[0, 0] = self.noise_std**2

        cov = forcing.copy()
        for iteration in range(LYAPUNOV_MAX_ITER):
            updated = lam @ cov @ lam.T + forcing
            step = np.max(np.abs(updated - cov))
            cov = updated
            if step < LYAPUNOV_TOL:
                logger.debug("Lyapunov iteration converged after %d steps", iteration + 1)
                return cov
        raise NumericalError(
            f"ar_p: stationary covariance did not converge in {LYAPUNOV_MAX_ITER} iterations"
        )

    def closed_form_kl(self, theta: Any) -> KLPair:
        delta = self.as_theta(theta) - self._theta_star
        scale = 2.0 * self.noise_std**2
        j_bar = float(delta @ self.stationary_covariance(theta) @ delta) / scale
        j_star = -float(delta @ self.stationary_covariance(self._theta_star) @ delta) / scale
        return KLPair(j_bar, j_star)

    def conditional_information(self, theta: Any, state: Any) -> Tuple[float, float]:
        phi = np.atleast_1d(np.asarray(state, dtype=float)).ravel()
        shift = float((self.as_theta(theta) - self._theta_star) @ phi)
        info = shift**2 / (2.0 * self.noise_std**2)
        return info, -info
