import numpy as np
import pytest

from xlmimo.channel import ChannelStatistics, hermitian_sqrt
from xlmimo.config import ScenarioConfig

ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_stats(R, h_bar=None, alpha=None, beta_los=None) -> ChannelStatistics:
    """Statistics built directly from covariances (beta_nlos = trace / N)."""
    R = np.asarray(R, dtype=complex)
    K, L, N, _ = R.shape
    alpha = np.zeros((K, L), dtype=np.int8) if alpha is None else np.asarray(alpha, dtype=np.int8)
    beta_los = np.zeros((K, L)) if beta_los is None else np.asarray(beta_los, dtype=float)
    h_bar = np.zeros((K, L, N), dtype=complex) if h_bar is None else np.asarray(h_bar, dtype=complex)
    beta_nlos = np.trace(R, axis1=2, axis2=3).real / N
    return ChannelStatistics(alpha, beta_los, beta_nlos, h_bar, R, hermitian_sqrt(R))


def random_covariances(rng, K, L, N, scale=1e-9, rank=None):
    """Random Hermitian PSD matrices with gains spread over two decades."""
    rank = N if rank is None else rank
    G = rng.standard_normal((K, L, N, rank)) + 1j * rng.standard_normal((K, L, N, rank))
    R = G @ np.conj(np.swapaxes(G, -1, -2)) / (2 * rank)
    gains = scale * 10 ** rng.uniform(-1, 1, size=(K, L))
    return R * gains[..., None, None]


def random_stats(rng, K, L, N, los=True, scale=1e-9):
    R = random_covariances(rng, K, L, N, scale)
    if not los:
        return make_stats(R)
    alpha = rng.integers(0, 2, size=(K, L))
    beta_los = scale * 10 ** rng.uniform(-1, 1, size=(K, L))
    phase = rng.uniform(0, 2 * np.pi, size=(K, L, N))
    h_bar = alpha[..., None] * np.sqrt(beta_los)[..., None] * np.exp(1j * phase)
    return make_stats(R, h_bar=h_bar, alpha=alpha, beta_los=beta_los)


@pytest.fixture
def cfg():
    return ScenarioConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
