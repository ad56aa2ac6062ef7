"""
Shared fixtures.

Small grids and the two models with closed-form eigenelements keep every
simulation in the suite short.
"""

import json

import numpy as np
import pytest

from src.models.coefficients import Coefficients
from src.models.kernel import FragmentKernel
from src.numerics.grid import DyadicLog, LogUniform, make_grid
from src.utils.workers import worker_pool


@pytest.fixture(autouse=True)
def reset_worker_pool():
    threads = worker_pool.max_workers
    yield
    worker_pool.max_workers = threads


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def dyadic_grid():
    """[2^-6, 32] with 8 cells per octave."""
    return make_grid(2.0 ** -6, 32.0, DyadicLog(8))


@pytest.fixture
def log_grid():
    return make_grid(1e-3, 50.0, LogUniform(120))


@pytest.fixture
def linear_growth():
    """g = x, B = x^2."""
    return Coefficients.power_law(a=1.0, g0=1.0, b=2.0, b0=1.0)


@pytest.fixture
def constant_rates():
    """g = 1, B = 1."""
    return Coefficients.power_law(a=0.0, g0=1.0, b=0.0, b0=1.0)


@pytest.fixture
def uniform():
    return FragmentKernel.uniform()


@pytest.fixture
def mitosis():
    return FragmentKernel.mitosis()


@pytest.fixture
def constant_mitosis_config(tmp_path):
    """Run config for g = 1, B = 1 with equal mitosis on a coarse grid."""
    path = tmp_path / "constant_mitosis.json"
    path.write_text(json.dumps({
        "model": {"g": {"type": "power", "a": 0.0, "g0": 1.0},
                  "B": {"type": "power", "b": 0.0, "b0": 1.0},
                  "kernel": "mitosis"},
        "grid": {"x_min": 2.0 ** -6, "x_max": 32.0, "scheme": "dyadic", "q": 8},
        "evolution": {"dt": 0.05, "T": 2.0, "snapshots": 10},
        "eigen": {"tol": 1e-3, "t_max": 40.0},
        "certificate": {"trials": 10, "probes": 5},
        "rate": {"T": 10.0, "bumps": [3.0]},
        "output": {"dir": str(tmp_path / "results")},
    }))
    return path
