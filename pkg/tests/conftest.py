import numpy as np
import pytest

from exchnet.relational import RelationalDataset


def random_dataset(rng, n=10, p=4, link="exp", scale=0.3, intercept=True):
    """Dense random network with moderate means under ``link``."""
    N = n * n - n
    X = rng.normal(size=(N, p))
    if intercept:
        X[:, 0] = 1.0
    beta = rng.normal(scale=scale, size=p)
    z = X @ beta
    if link == "exp":
        mu = np.exp(z)
    elif link == "logistic":
        mu = 1.0 / (1.0 + np.exp(-z))
    else:
        mu = np.pi / 2 + np.arctan(z)
    y = rng.poisson(mu).astype(float)
    return RelationalDataset(n, y, X), beta


def random_valid_eta(rng, n, scale=1.0):
    """Draw an eta inside the parameter space by rejection on lambda_min."""
    from exchnet.covariance import EtaVector, min_eigenvalue

    while True:
        eta1 = rng.uniform(0.2, 1.0) * scale
        rest = rng.uniform(-0.1, 0.1, size=4) * scale
        eta = EtaVector(eta1, *rest)
        if min_eigenvalue(eta, n) > 1e-6:
            return eta


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
