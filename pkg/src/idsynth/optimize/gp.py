"""Small Gaussian-process surrogate with expected improvement, on the unit hypercube."""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.stats import norm

NOISE = 1e-3
LOG_LENGTH_BOUNDS = (np.log(0.02), np.log(5.0))


def matern52(x1: np.ndarray, x2: np.ndarray, length) -> np.ndarray:
    """Matern 5/2 kernel with unit variance; `length` is a scalar or one value per dimension."""
    a = x1 / length
    b = x2 / length
    d = np.sqrt(np.maximum(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1), 0.0))
    s5 = np.sqrt(5.0) * d
    return (1.0 + s5 + 5.0 / 3.0 * d**2) * np.exp(-s5)


def log_marginal_likelihood(x: np.ndarray, y: np.ndarray, length, noise: float = NOISE) -> float:
    if len(x) == 0:
        return 0.0
    K = matern52(x, x, length) + noise * np.eye(len(x))
    try:
        cf = cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    alpha = cho_solve(cf, y)
    return float(-0.5 * y @ alpha - np.log(np.diag(cf[0])).sum() - 0.5 * len(x) * np.log(2 * np.pi))


def fit_length_scales(groups, dim: int, start=None, noise: float = NOISE, maxiter: int = 30) -> np.ndarray:
    """Per-dimension length scales maximizing the summed marginal likelihood of independent GPs.

    `groups` is a list of (x, y) pairs sharing hyperparameters (one per categorical level).
    """
    groups = [(x, y) for x, y in groups if len(x) > 1]
    if start is None:
        start = np.full(dim, 0.3)
    if not groups:
        return np.asarray(start, dtype=np.float64)

    def nll(theta):
        v = -sum(log_marginal_likelihood(x, y, np.exp(theta), noise) for x, y in groups)
        return v if np.isfinite(v) else 1e12

    res = minimize(nll, np.log(start), method="L-BFGS-B", bounds=[LOG_LENGTH_BOUNDS] * dim,
                   options={"maxiter": maxiter})
    return np.exp(res.x)


class GaussianProcess:
    """Zero-mean, unit-variance GP on standardized targets."""

    def __init__(self, length=0.3, noise: float = NOISE):
        self.length = np.asarray(length, dtype=np.float64)
        self.noise = noise
        self.x = np.zeros((0, 0))

    def fit(self, x: np.ndarray, y: np.ndarray) -> "GaussianProcess":
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        if len(self.x):
            K = matern52(self.x, self.x, self.length) + self.noise * np.eye(len(self.x))
            self._cf = cho_factor(K, lower=True)
            self._alpha = cho_solve(self._cf, self.y)
        return self

    def predict(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xs = np.asarray(xs, dtype=np.float64)
        if len(self.x) == 0:
            return np.zeros(len(xs)), np.ones(len(xs))
        Ks = matern52(xs, self.x, self.length)
        mu = Ks @ self._alpha
        v = cho_solve(self._cf, Ks.T)
        var = np.maximum(1.0 - np.einsum("ij,ji->i", Ks, v), 1e-12)
        return mu, np.sqrt(var)


def expected_improvement(mu: np.ndarray, sd: np.ndarray, best: float, xi: float = 0.01) -> np.ndarray:
    imp = mu - best - xi
    z = imp / sd
    return imp * norm.cdf(z) + sd * norm.pdf(z)
