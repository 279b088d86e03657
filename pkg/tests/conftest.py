import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("tsv", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("tsv")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_state(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_hermitian(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (m + m.conj().T) / 2


def random_matrix(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def same_ray(a, b, tol):
    """True if a and b agree up to a global phase."""
    a, b = np.asarray(a), np.asarray(b)
    k = int(np.argmax(np.abs(b)))
    phase = a[k] / b[k]
    return abs(abs(phase) - 1) < tol and np.allclose(a, phase * b, atol=tol)
