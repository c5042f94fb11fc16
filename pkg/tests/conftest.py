"""Shared fixtures: small models and the synthetic scaling-family oracle."""

import numpy as np
import pytest

from pxpsim.basis import OBC, PBC, enumerate_basis
from pxpsim.fss import make_dataset
from pxpsim.hamiltonian import build_hamiltonian
from pxpsim.protocols import build_model


@pytest.fixture(scope="session")
def model_n10_obc():
    return build_model(10, OBC)


@pytest.fixture(scope="session")
def model_n12_obc():
    return build_model(12, OBC)


@pytest.fixture(scope="session")
def model_n10_pbc():
    return build_model(10, PBC)


@pytest.fixture(scope="session")
def model_n12_pbc():
    return build_model(12, PBC)


def synthetic_scaling(gamma_c=0.013, nu=0.56, noisy=True, seed=0,
                      sizes=(12, 16, 20, 24, 28), n_rates=20,
                      rate_window=(0.005, 0.021)):
    """Exactly collapsing family S = 2.4 - 2.2*tanh(x/1.5) with x the
    scaling variable; noise is i.i.d. Gaussian at 3% of the family scale."""
    rng = np.random.default_rng(seed)
    rates = np.linspace(rate_window[0], rate_window[1], n_rates)
    sigma = 0.03 * 2.4
    rows = []
    for n in sizes:
        x = (rates - gamma_c) * n ** (1.0 / nu)
        s = 2.4 - 2.2 * np.tanh(x / 1.5)
        err = np.full(n_rates, sigma)
        values = s + rng.normal(0.0, err) if noisy else s
        rows.append(np.column_stack([np.full(n_rates, n), rates, values, err]))
    table = np.vstack(rows)
    return make_dataset(table[:, 0], table[:, 1], table[:, 2], table[:, 3])


@pytest.fixture
def synthetic_family():
    return synthetic_scaling
