import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("dqae", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dqae")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dense_kron_marginals(phi):
    """Explicit (x)_k rho_k as a 2^n x 2^n matrix, qubit 0 least significant."""
    from dqae.state import n_qubits, reduced_density_matrix
    n = n_qubits(phi)
    out = np.ones((1, 1), dtype=complex)
    for k in range(n):
        out = np.kron(reduced_density_matrix(phi, k), out)
    return out
