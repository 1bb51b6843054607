import numpy as np
import pytest
import torch
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

torch.set_default_dtype(torch.float64)

# acceptance criterion -> one-line verdict, printed after the run
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_rotation(rng, proper=True):
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    Q = Q * np.sign(np.diag(R))
    if proper and np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def random_symmetric(rng, k, min_gap=1e-3):
    """Random symmetric matrix whose eigenvalues are separated by at least ``min_gap``."""
    while True:
        A = rng.standard_normal((k, k))
        A = 0.5 * (A + A.T)
        w = np.linalg.eigvalsh(A)
        if k < 2 or np.min(np.diff(w)) >= min_gap:
            return A
