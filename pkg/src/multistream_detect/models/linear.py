"""
Multivariate linear model with random coefficients.

    X_n = (theta + B_n) X_{n-1} + w_n,   w_n ~ N(0, Q*),

with B_n a zero-mean Gaussian random matrix. The block takes the covariance of
vec(B_n) (row-major); the Kronecker moment Q = E[B (x) B] is derived from it so
that the sampler, the conditional covariance

    G(x) = reshape(Q vec(x x')) + Q*

and the second-moment stability operator theta (x) theta + Q all agree.
"""

import logging
from typing import Any, Optional, Tuple

import numpy as np
from scipy import linalg

from ..errors import ConfigurationError
from .base import Observation, StreamModel, spectral_radius

logger = logging.getLogger(__name__)


def kronecker_moment(coef_cov: np.ndarray, p: int) -> np.ndarray:
    """E[B (x) B] from Cov(vec B): Q[a*p+b, c*p+d] = Cov[a*p+c, b*p+d]."""
    return coef_cov.reshape(p, p, p, p).transpose(0, 2, 1, 3).reshape(p * p, p * p)


class RandomCoefficientLinearModel(StreamModel):
    """p-dimensional Markov model; theta is the p x p coefficient matrix flattened."""

    kind = "random_coeff_linear"

    def __init__(self, theta_star: Any, noise_cov: Any, coef_cov: Any = None):
        self._theta_star = np.atleast_2d(np.asarray(theta_star, dtype=float))
        p = self._theta_star.shape[0]
        if self._theta_star.shape != (p, p):
            raise ConfigurationError("random_coeff_linear: theta_star must be square")
        self.p = p

        self.noise_cov = np.atleast_2d(np.asarray(noise_cov, dtype=float))
        if self.noise_cov.shape != (p, p):
            raise ConfigurationError(f"random_coeff_linear: noise_cov must be {p}x{p}")
        try:
            self._noise_root = np.linalg.cholesky(self.noise_cov)
        except np.linalg.LinAlgError as e:
            raise ConfigurationError("random_coeff_linear: noise_cov must be positive definite") from e

        if coef_cov is None:
            self.coef_cov = np.zeros((p * p, p * p))
        else:
            self.coef_cov = np.atleast_2d(np.asarray(coef_cov, dtype=float))
        if self.coef_cov.shape != (p * p, p * p):
            raise ConfigurationError(f"random_coeff_linear: coef_cov must be {p * p}x{p * p}")
        if not np.allclose(self.coef_cov, self.coef_cov.T):
            raise ConfigurationError("random_coeff_linear: coef_cov must be symmetric")
        eigvals, eigvecs = np.linalg.eigh(self.coef_cov)
        if eigvals.min() < -1e-12:
            raise ConfigurationError("random_coeff_linear: coef_cov must be positive semidefinite")
        self._coef_root: Optional[np.ndarray] = None
        if eigvals.max() > 0.0:
            self._coef_root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
        self.kron_moment = kronecker_moment(self.coef_cov, p)

        if not self.stationarity_check(self._theta_star):
            raise ConfigurationError(
                "random_coeff_linear: theta_star outside the second-moment stability region"
            )

    @property
    def dim(self) -> int:
        return self.p * self.p

    @property
    def state_dim(self) -> int:
        return self.p

    @property
    def theta_star(self) -> np.ndarray:
        return self._theta_star.ravel().copy()

    def conditional_covariance(self, x: np.ndarray) -> np.ndarray:
        """G(x) = reshape(Q vec(x x')) + Q*."""
        spread = (self.kron_moment @ np.outer(x, x).ravel()).reshape(self.p, self.p)
        return spread + self.noise_cov

    def llr_batch(self, thetas: np.ndarray, y: Observation, state: np.ndarray) -> np.ndarray:
        obs = np.asarray(y, dtype=float).reshape(self.p)
        factor = linalg.cho_factor(self.conditional_covariance(state))
        resid_star = obs - self._theta_star @ state
        resid = obs[None, :] - thetas.reshape(-1, self.p, self.p) @ state
        quad_star = resid_star @ linalg.cho_solve(factor, resid_star)
        quad = np.sum(resid * linalg.cho_solve(factor, resid.T).T, axis=1)
        return 0.5 * (quad_star - quad)

    def transition(self, theta: Optional[np.ndarray], state: np.ndarray, rng: Any) -> Observation:
        coef = self._theta_star if theta is None else theta.reshape(self.p, self.p)
        if self._coef_root is not None:
            shock = self._coef_root @ np.asarray(rng.standard_normal(self.p * self.p), dtype=float)
            coef = coef + shock.reshape(self.p, self.p)
        noise = self._noise_root @ np.asarray(rng.standard_normal(self.p), dtype=float)
        return coef @ state + noise

    def advance(self, y: Observation, state: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float).reshape(self.p).copy()

    def stationarity_check(self, theta: Any) -> bool:
        coef = np.asarray(theta, dtype=float).reshape(self.p, self.p)
        return spectral_radius(np.kron(coef, coef) + self.kron_moment) < 1.0

    def conditional_information(self, theta: Any, state: Any) -> Tuple[float, float]:
        x = np.asarray(state, dtype=float).reshape(self.p)
        shift = (self.as_theta(theta).reshape(self.p, self.p) - self._theta_star) @ x
        factor = linalg.cho_factor(self.conditional_covariance(x))
        info = 0.5 * float(shift @ linalg.cho_solve(factor, shift))
        return info, -info
