"""Random problem generators shared by the tests."""
import numpy as np

from alotune import Dataset, attach_intercept


def regression(rng, n, p, intercept=False, noise=1.0):
    X = rng.standard_normal((n, p))
    y = X @ rng.standard_normal(p) + noise * rng.standard_normal(n)
    ds = Dataset.from_arrays(X, y)
    return attach_intercept(ds) if intercept else ds


def classification(rng, n, p, intercept=False, scale=1.0):
    X = rng.standard_normal((n, p))
    lin = scale * X @ rng.standard_normal(p) / np.sqrt(p)
    y = np.where(rng.random(n) < 1.0 / (1.0 + np.exp(-lin)), 1.0, -1.0)
    # both classes present so that an intercept fit stays bounded
    y[0], y[1] = 1.0, -1.0
    ds = Dataset.from_arrays(X, y, task="classification")
    return attach_intercept(ds) if intercept else ds


def log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))
