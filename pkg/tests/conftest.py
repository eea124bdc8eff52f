import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nctmc.core import ReactionNetwork
from nctmc.models import FunctionModel

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_network(rng, species=None, reactions=None, max_coeff=2):
    """Small random network in which every reaction changes the state."""
    s = species or int(rng.integers(1, 4))
    r = reactions or int(rng.integers(1, 6))
    phi = np.zeros((r, s), dtype=np.int64)
    psi = np.zeros((r, s), dtype=np.int64)
    for j in range(r):
        while True:
            phi[j] = rng.integers(0, max_coeff + 1, s)
            psi[j] = rng.integers(0, max_coeff + 1, s)
            if (phi[j] != psi[j]).any():
                break
    return ReactionNetwork(phi, psi)


def mass_action_model(network, k):
    """Class-level mass-action rates as a plain function (independent of truth.py)."""
    k = np.asarray(k, dtype=np.float64)
    phi = network.reactants
    M = network.classes.membership
    s = network.species_count

    def rates(X):
        S = X[:, :s]
        out = np.empty((len(X), len(k)))
        for j in range(len(k)):
            a = np.full(len(X), k[j])
            for i in range(s):
                for m in range(phi[j, i]):
                    a = a * np.maximum(S[:, i] - m, 0.0)
            out[:, j] = a
        return out @ M

    return FunctionModel(rates, network.classes.class_count)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
