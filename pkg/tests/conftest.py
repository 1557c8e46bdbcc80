import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from mixed_liouvillian.liouville import JumpChannel, SystemModel, ketbra

settings.register_profile(
    "repo", deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


def random_density(rng, n, rank=None):
    rank = n if rank is None else rank
    a = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_elementary_model(rng, dims=(2, 3, 4), log_gc=(-4.0, 4.0)):
    """Random Hamiltonian with 1..N^2-1 random elementary jumps sqrt(g)|b><a|."""
    n = int(rng.choice(dims))
    h = random_hermitian(rng, n)
    channels = []
    for _ in range(int(rng.integers(1, n * n))):
        a, b = rng.choice(n, 2, replace=False)
        rate = 10 ** rng.uniform(-1.5, 0.5)
        channels.append(JumpChannel(np.sqrt(rate) * ketbra(n, int(b), int(a))))
    return SystemModel(h, channels, 10 ** rng.uniform(*log_gc))


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# -- acceptance summary ---------------------------------------------------------------

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
