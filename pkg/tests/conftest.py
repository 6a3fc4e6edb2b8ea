import numpy as np
import pytest

from tsfic.spectral import default_quadrature, make_arma_family


def ar_recursion(coefs, n, seed, sigma=1.0, burn=500):
    """AR series by direct recursion with a burn-in; independent of the Toeplitz sampler."""
    rng = np.random.default_rng(seed)
    coefs = np.asarray(coefs, dtype=float)
    p = coefs.size
    e = sigma * rng.standard_normal(n + burn)
    y = np.zeros(n + burn)
    for t in range(n + burn):
        for j in range(p):
            if t - j - 1 >= 0:
                y[t] += coefs[j] * y[t - j - 1]
        y[t] += e[t]
    return y[burn:]


def ar1_series(rho, n, seed, sigma=1.0):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n + 500) * sigma
    y = np.empty(n + 500)
    y[0] = e[0] / np.sqrt(1 - rho ** 2)
    for t in range(1, n + 500):
        y[t] = rho * y[t - 1] + e[t]
    return y[500:]


@pytest.fixture(scope="session")
def q512():
    return default_quadrature(1)


@pytest.fixture(scope="session")
def families():
    return {
        "wn": make_arma_family(0, 0),
        "ar1": make_arma_family(1, 0),
        "ar2": make_arma_family(2, 0),
        "ma1": make_arma_family(0, 1),
        "arma11": make_arma_family(1, 1),
        "arma21": make_arma_family(2, 1),
    }
