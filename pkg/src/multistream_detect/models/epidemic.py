"""
Epidemic models for the fraction of free hospital capacity.

The binomial model is exact: each of the x currently free units stays free
with probability 1 - theta. The Gaussian model is its diffusion approximation,
scaled by the capacity V:

    X_n = (1 - theta) X_{n-1} + sigma_theta sqrt(|X_{n-1}|) xi_n,
    sigma_theta = sqrt(theta (1 - theta) / V).
"""

import logging
import math
from typing import Any, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError, ModelDomainError
from .base import KLCoefficients, KLPair, Observation, StreamModel, check_probability

logger = logging.getLogger(__name__)

STATE_FLOOR = 1e-12

# Information along a decaying path is averaged until E[X_n] falls to exp(-3) x0.
DECAY_HORIZON = 3.0


def _scalar(value: Any) -> float:
    return float(np.asarray(value, dtype=float).reshape(-1)[0])


class EpidemicGaussianModel(StreamModel):
    """
    Gaussian epidemic model with pre-change rate ``p_star`` and capacity ``scale``.

    LLR evaluation at states with |x| < 1e-12 uses |x| = 1e-12. An exact zero
    state is a domain error unless the model is built with ``strict=False``.
    """

    kind = "epidemic_gaussian"

    def __init__(self, p_star: float, scale: float = 1.0, strict: bool = True):
        self.p_star = check_probability("epidemic_gaussian: p_star", p_star)
        if not scale > 0.0:
            raise ConfigurationError(f"epidemic_gaussian: scale must be positive, got {scale}")
        self.scale = float(scale)
        self.strict = strict

    @property
    def dim(self) -> int:
        return 1

    @property
    def state_dim(self) -> int:
        return 1

    @property
    def theta_star(self) -> np.ndarray:
        return np.array([self.p_star])

    def diffusion(self, theta: Any) -> Any:
        return np.sqrt(theta * (1.0 - theta) / self.scale)

    def _abs_state(self, state: Any) -> float:
        x = abs(_scalar(state))
        if x == 0.0 and self.strict:
            raise ModelDomainError("epidemic_gaussian: density undefined at state 0")
        return max(x, STATE_FLOOR)

    def state_guarded(self, state: np.ndarray) -> bool:
        return abs(_scalar(state)) < STATE_FLOOR

    def llr_batch(self, thetas: np.ndarray, y: Observation, state: np.ndarray) -> np.ndarray:
        x = _scalar(state)
        root = math.sqrt(self._abs_state(state))
        obs = _scalar(y)
        theta = thetas[:, 0]
        sigma = self.diffusion(theta)
        sigma_star = float(self.diffusion(self.p_star))
        eta = (obs - (1.0 - theta) * x) / (sigma * root)
        eta_star = (obs - (1.0 - self.p_star) * x) / (sigma_star * root)
        return np.log(sigma_star / sigma) + 0.5 * eta_star**2 - 0.5 * eta**2

    def transition(self, theta: Optional[np.ndarray], state: np.ndarray, rng: Any) -> Observation:
        rate = self.p_star if theta is None else float(theta[0])
        x = _scalar(state)
        shock = float(rng.standard_normal())
        return (1.0 - rate) * x + float(self.diffusion(rate)) * math.sqrt(abs(x)) * shock

    def advance(self, y: Observation, state: np.ndarray) -> np.ndarray:
        return np.array([_scalar(y)])

    def simulate_paths(
        self, theta: Optional[float], x0: float, steps: int, paths: int, rng: Any
    ) -> np.ndarray:
        """Independent paths as a (paths, steps + 1) array, column 0 holding x0."""
        rate = self.p_star if theta is None else float(theta)
        sigma = float(self.diffusion(rate))
        out = np.empty((paths, steps + 1))
        out[:, 0] = x0
        for n in range(1, steps + 1):
            prev = out[:, n - 1]
            out[:, n] = (1.0 - rate) * prev + sigma * np.sqrt(np.abs(prev)) * rng.standard_normal(
                paths
            )
        return out

    def stationarity_check(self, theta: Any) -> bool:
        rate = _scalar(theta)
        return 0.0 < rate < 1.0

    def _rate(self, theta: Any) -> float:
        rate = _scalar(self.as_theta(theta))
        if not (0.0 < rate < 1.0):
            raise ModelDomainError(f"epidemic_gaussian: theta={rate} must lie in (0, 1)")
        return rate

    def closed_form_kl(self, theta: Any) -> KLCoefficients:
        """Coefficients of J_bar and J*_bar as affine functions of E|state|."""
        rate = self._rate(theta)
        var = rate * (1.0 - rate)
        var_star = self.p_star * (1.0 - self.p_star)
        log_ratio = math.log(var_star / var)
        gap = self.scale * (rate - self.p_star) ** 2
        return KLCoefficients(
            j_intercept=0.5 * (log_ratio - 1.0 + var / var_star),
            j_slope=0.5 * gap / var_star,
            j_star_intercept=0.5 * (log_ratio + 1.0 - var_star / var),
            j_star_slope=-0.5 * gap / var,
        )

    def decay_horizon(self, theta: Any = None, decay: float = DECAY_HORIZON) -> int:
        """Steps until the expected state (1 - theta)^n x0 has shrunk by exp(-decay)."""
        rate = self.p_star if theta is None else self._rate(theta)
        if not decay > 0.0:
            raise ConfigurationError(f"epidemic_gaussian: decay must be positive, got {decay}")
        return max(1, math.ceil(decay / -math.log1p(-rate)))

    def ergodic_kl(self, theta: Any, abs_mean_post: float, abs_mean_pre: float) -> KLPair:
        """Ergodic pair once E|state| under both regimes is known."""
        return self.closed_form_kl(theta).evaluate(abs_mean_post, abs_mean_pre)

    def conditional_information(self, theta: Any, state: Any) -> Tuple[float, float]:
        coefficients = self.closed_form_kl(theta)
        x = abs(_scalar(state))
        return (
            coefficients.j_intercept + coefficients.j_slope * x,
            coefficients.j_star_intercept + coefficients.j_star_slope * x,
        )


class EpidemicBinomialModel(StreamModel):
    """
    Exact binomial thinning: Y_n ~ Binomial(X_{n-1}, 1 - theta).

    Its ergodic law is the point mass at the absorbing state 0, so the ergodic
    KL pair is (0, 0); use it for simulation cross-checks, not for bounds.
    """

    kind = "epidemic_binomial"

    def __init__(self, p_star: float):
        self.p_star = check_probability("epidemic_binomial: p_star", p_star)

    @property
    def dim(self) -> int:
        return 1

    @property
    def state_dim(self) -> int:
        return 1

    @property
    def theta_star(self) -> np.ndarray:
        return np.array([self.p_star])

    def llr_batch(self, thetas: np.ndarray, y: Observation, state: np.ndarray) -> np.ndarray:
        x = _scalar(state)
        obs = _scalar(y)
        if obs < 0 or obs > x or obs != math.floor(obs):
            raise ModelDomainError(f"epidemic_binomial: observation {obs} outside 0..{x:g}")
        theta = thetas[:, 0]
        return (x - obs) * np.log(theta / self.p_star) + obs * np.log(
            (1.0 - theta) / (1.0 - self.p_star)
        )

    def transition(self, theta: Optional[np.ndarray], state: np.ndarray, rng: Any) -> Observation:
        rate = self.p_star if theta is None else float(theta[0])
        return float(rng.binomial(int(_scalar(state)), 1.0 - rate))

    def advance(self, y: Observation, state: np.ndarray) -> np.ndarray:
        return np.array([_scalar(y)])

    def stationarity_check(self, theta: Any) -> bool:
        rate = _scalar(theta)
        return 0.0 < rate < 1.0

    def closed_form_kl(self, theta: Any) -> KLPair:
        self.as_theta(theta)
        logger.debug("epidemic_binomial: ergodic law is degenerate at 0")
        return KLPair(0.0, 0.0)

    def conditional_information(self, theta: Any, state: Any) -> Tuple[float, float]:
        rate = _scalar(self.as_theta(theta))
        if not (0.0 < rate < 1.0):
            raise ModelDomainError(f"epidemic_binomial: theta={rate} must lie in (0, 1)")
        x = _scalar(state)
        log_stay = math.log(rate / self.p_star)
        log_leave = math.log((1.0 - rate) / (1.0 - self.p_star))
        return (
            x * (rate * log_stay + (1.0 - rate) * log_leave),
            x * (self.p_star * log_stay + (1.0 - self.p_star) * log_leave),
        )
