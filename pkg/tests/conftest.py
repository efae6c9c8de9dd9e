from __future__ import annotations

import numpy as np
import pytest

from qvelab.density import detect_support, extract_density
from qvelab.ensembles import BlockParams, block_model, deformed_wigner_model, delta_critical, semicircle_model, two_point_profile
from qvelab.singularity import analyze
from qvelab.solver import default_eta_ladder, solve_grid

CUSP_PARAMS = BlockParams(alpha=3.0, beta=1.0, gamma=1.0 / 3.0, delta=delta_critical(3.0))


def pipeline(model, taus, etas=None, compress=True):
    """Grid solve, density and support for ``model``."""
    etas = default_eta_ladder() if etas is None else etas
    grid = solve_grid(model, taus, etas, compress=compress)
    profile = extract_density(grid)
    detect_support(profile)
    return grid, profile


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def semicircle200():
    return semicircle_model(200)


@pytest.fixture(scope="session")
def semicircle_pipeline():
    model = semicircle_model(200)
    grid, profile = pipeline(model, np.linspace(-3.0, 3.0, 601))
    return model, grid, profile


@pytest.fixture(scope="session")
def semicircle_reports(semicircle_pipeline):
    return analyze(semicircle_pipeline[2])


@pytest.fixture(scope="session")
def cusp_model():
    return block_model(CUSP_PARAMS, 504)


@pytest.fixture(scope="session")
def cusp_pipeline(cusp_model):
    grid, profile = pipeline(cusp_model, np.linspace(-3.0, 3.0, 601))
    return cusp_model, grid, profile


@pytest.fixture(scope="session")
def cusp_reports(cusp_pipeline):
    return analyze(cusp_pipeline[2])


@pytest.fixture(scope="session")
def deformed_model():
    return deformed_wigner_model(1.0, two_point_profile(100, 1.0))
