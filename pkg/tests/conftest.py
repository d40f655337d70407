import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_spd(rng: np.random.Generator, m: int, spread: float = 1.0) -> np.ndarray:
    """SPD matrix with log-eigenvalues uniform in [-spread, spread]."""
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    lam = np.exp(rng.uniform(-spread, spread, m))
    mat = (q * lam) @ q.T
    return 0.5 * (mat + mat.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
