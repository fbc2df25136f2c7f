"""Shared fixtures for the test suite.

The replicate studies are expensive (a full moment fit per replicate), so
they are computed once per session and shared between the module tests and
the acceptance tests.
"""

import numpy as np
import pytest

from palmblink import (
    CsrLayout,
    DarkState,
    GammaSigma,
    KineticRates,
    MultiDarkModel,
    Window,
    refit_study,
    sample_ibcpp,
    sample_proteins,
)

# Reference parameter sets used throughout: a short-lived dark state
# (r_f, r_d, r_r, r_b) = (0.004, 6, 1, 3) and a long-lived one with
# (0.004, 12, 0.5, 3).  Frame exposure is 0.04 s unless a test says
# otherwise.
DELTA = 0.04
DURATION = 1200.0
WINDOW = Window(0.0, 5000.0, 0.0, 5000.0)


@pytest.fixture(scope="session")
def short_rates():
    return KineticRates(r_f=0.004, r_d=6.0, r_r=1.0, r_b=3.0)


@pytest.fixture(scope="session")
def long_rates():
    return KineticRates(r_f=0.004, r_d=12.0, r_r=0.5, r_b=3.0)


@pytest.fixture(scope="session")
def three_dark_model():
    return MultiDarkModel(
        r_f=0.004,
        r_b=2.5,
        dark_states=(
            DarkState(entry_rate=4.0, return_rate=0.25),
            DarkState(entry_rate=4.0, return_rate=1.0),
            DarkState(entry_rate=4.0, return_rate=10.0),
        ),
    )


def _study(model, n_replicates, seed):
    return refit_study(
        model,
        CsrLayout(n_points=500),
        WINDOW,
        GammaSigma(),
        exposure=DELTA,
        duration=DURATION,
        n_replicates=n_replicates,
        seed=seed,
    )


@pytest.fixture(scope="session")
def short_study(short_rates):
    """20 refit replicates of the short-lived reference simulation."""
    return _study(short_rates, 20, seed=101)


@pytest.fixture(scope="session")
def long_study(long_rates):
    """10 refit replicates of the long-lived reference simulation."""
    return _study(long_rates, 10, seed=202)


@pytest.fixture(scope="session")
def three_dark_study(three_dark_model):
    """10 refit replicates of the three-dark-state simulation."""
    return _study(three_dark_model, 10, seed=303)


@pytest.fixture(scope="session")
def small_dataset(short_rates):
    """A modest simulated dataset for structural and smoke tests."""
    rng = np.random.default_rng(555)
    proteins = sample_proteins(CsrLayout(n_points=500), WINDOW, rng)
    return sample_ibcpp(
        proteins, short_rates, WINDOW, GammaSigma(), DELTA, DURATION, rng
    )
