"""
Shared fixtures for the multistream-detect test-suite.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from multistream_detect.core import GeometricPrior, ParameterGrid
from multistream_detect.models import AutoregressiveModel, IIDGaussianModel


class ConstantNoise:
    """Random source whose Gaussian draws all equal ``value``."""

    def __init__(self, value: float = 0.0):
        self.value = value

    def standard_normal(self, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value, dtype=float)


@pytest.fixture
def zero_noise():
    return ConstantNoise(0.0)


@pytest.fixture
def constant_noise():
    return ConstantNoise


@pytest.fixture
def gaussian_pair():
    """Two unit-variance Gaussian streams with a five-point mean grid each."""
    models = [IIDGaussianModel(), IIDGaussianModel()]
    grids = [ParameterGrid.uniform([0.25, 0.5, 0.75, 1.0, 1.5]) for _ in models]
    return models, grids


@pytest.fixture
def ar1_pair():
    """Two AR(1) streams with theta* = 0 and the single post-change value 0.5."""
    models = [AutoregressiveModel(0.0), AutoregressiveModel(0.0)]
    grids = [ParameterGrid.uniform([0.5]), ParameterGrid.uniform([0.5])]
    return models, grids


@pytest.fixture
def half_prior():
    return GeometricPrior(rho=0.5)


@pytest.fixture
def config_file(tmp_path):
    """Write a JSON configuration and return its path."""

    def _write(data: dict, name: str = "config.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def gaussian_config():
    return {
        "n_streams": 2,
        "rho": 0.1,
        "alpha_matrix": [[0.05, 0.05], [0.05, 0.05]],
        "streams": [
            {"model": {"kind": "iid_gaussian"}, "grid": {"points": [1.0]}},
            {"model": {"kind": "iid_gaussian"}, "grid": {"points": [1.0]}},
        ],
    }


@pytest.fixture
def ar_beta_config():
    return {
        "n_streams": 2,
        "auto_rho": True,
        "beta_matrix": [[0.05, 0.05], [0.05, 0.05]],
        "streams": [
            {"model": {"kind": "ar_p", "theta_star": 0.0}, "grid": {"points": [0.5]}},
            {"model": {"kind": "ar_p", "theta_star": 0.0}, "grid": {"points": [0.5]}},
        ],
    }
