"""
GnarLab — Test-Fixtures
Kleines SBM-Netz (N=40, C=4) mit alternierenden Gruppen und Szenario-1-Parametern (G0=2).
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from core.model import Membership, NoiseSpec, simulate, simulate_noiseless  # noqa: E402
from core.network import gen_sbm, row_normalize  # noqa: E402
from core.scenarios import draw_covariates, scenario_params  # noqa: E402

N_NODES = 40


@pytest.fixture
def net():
    return gen_sbm(N_NODES, 4, 7)


@pytest.fixture
def w(net):
    return row_normalize(net)


@pytest.fixture
def truth():
    return Membership(np.arange(N_NODES) % 2, 2)


@pytest.fixture
def true_params():
    return scenario_params(1, 2)


@pytest.fixture
def covariates():
    return draw_covariates(N_NODES, 2, np.random.default_rng(5))


@pytest.fixture
def panel(true_params, truth, w, covariates):
    return simulate(true_params, truth, w, covariates, 80, NoiseSpec(1.0), rng_seed=11)


@pytest.fixture
def clean_panel(true_params, truth, w, covariates):
    """Ohne Innovationen; die Anregung kommt nur aus einem zufälligen y_0."""
    y0 = np.random.default_rng(13).standard_normal(N_NODES)
    return simulate_noiseless(true_params, truth, w, covariates, 30, y0)
