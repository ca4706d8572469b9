import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mpotrace import tt_core as tt

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_mpo(rng, L, D=3, d=2, complex_=False):
    bonds = [1] + [D] * (L - 1) + [1]
    cores = []
    for k in range(L):
        c = rng.standard_normal((bonds[k], bonds[k + 1], d, d))
        if complex_:
            c = c + 1j * rng.standard_normal(c.shape)
        cores.append(c)
    return tt.TensorTrainOperator(cores)


def random_hermitian(rng, n, complex_=True):
    m = rng.standard_normal((n, n))
    if complex_:
        m = m + 1j * rng.standard_normal((n, n))
    return (m + m.conj().T) / 2


def krylov_dimension(lam):
    """Number of distinct eigenvalues, the dimension of the Krylov space of I.

    Iterates beyond it follow a breakdown that round-off pushed just above the
    threshold; they are noise, not Lanczos basis elements.
    """
    lam = np.sort(np.asarray(lam))
    gap = 1e-8 * max(np.abs(lam).max(), 1.0)
    return 1 + int(np.count_nonzero(np.diff(lam) > gap))


def exchange(L):
    return np.fliplr(np.eye(2**L))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
