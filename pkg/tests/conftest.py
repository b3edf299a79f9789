import numpy as np
import pytest

from cucgarch.model import fit_cuc_garch
from cucgarch.simulator import SimConfig, simulate_cuc_garch


@pytest.fixture(scope="session")
def reference_sim():
    """A 1000-step draw from the three-component reference design."""
    return simulate_cuc_garch(SimConfig.reference(1000, seed=2024))


@pytest.fixture(scope="session")
def fitted(reference_sim):
    panel, _, _ = reference_sim
    return fit_cuc_garch(panel)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_orthogonal(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
