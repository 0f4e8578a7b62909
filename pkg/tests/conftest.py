import numpy as np
import pytest

from relubias.spectral_data import Dataset, LabelSpec, make_spectrum, sample_dataset


def make_ds(X, y):
    """Dataset from explicit rows; the spectrum is isotropic of matching width."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return Dataset(X, y, make_spectrum("isotropic", X.shape[1]))


def orthonormal_ds(y, d=None, seed=0):
    y = np.asarray(y, dtype=float)
    n = y.size
    d = d or n + 3
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((d, n)))
    return make_ds(q.T, y)


def random_ds(n, d, seed, labels=None):
    labels = labels or LabelSpec(both_signs=True)
    return sample_dataset(make_spectrum("isotropic", d), n, labels, "gaussian", seed)


@pytest.fixture
def hd_dataset():
    return random_ds(10, 2000, 0)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(test_acceptance.VERDICTS):
            terminalreporter.write_line(test_acceptance.VERDICTS[key])
