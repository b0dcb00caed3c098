"""1D Poisson inverse problem with a scalar uniform prior.

-u'' = x on (0,1) with homogeneous Dirichlet conditions; the forcing
amplitude x is the unknown.  The exact solution is u(z) = -x (z^2 - z) / 2,
so the discretization error is fully controlled: piecewise-linear finite
elements on mesh width 2^-(level+1), solved with the tridiagonal kernel.
"""
from __future__ import annotations

import numpy as np

from mismc._kernels import thomas_solve
from mismc.models.base import Model, gaussian_log_likelihood
from mismc.multiindex import MultiIndex

OBS_POINTS = np.round(np.arange(1, 11) * 0.1, 10)
NOISE_SD = 0.2
TRUTH = 0.2581


def exact_solution(x: float, z: np.ndarray) -> np.ndarray:
    return -0.5 * x * (z * z - z)


def fem1d_solve(x: float, level: int) -> np.ndarray:
    """Nodal solution (boundary nodes included) on mesh width 2^-(level+1)."""
    if level < 0:
        raise ValueError("level must be non-negative")
    K = 2 ** (level + 1)
    h = 1.0 / K
    n = K - 1
    diag = np.full(n, 2.0 / h)
    off = np.full(max(n - 1, 0), -1.0 / h)
    load = np.full(n, x * h)  # exact load for constant forcing
    interior = thomas_solve(off, diag, off, load)
    full = np.zeros(K + 1)
    full[1:-1] = interior
    return full


def interpolate_nodal(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of nodal values on the uniform mesh."""
    grid = np.linspace(0.0, 1.0, values.shape[0])
    return np.interp(points, grid, values)


def generate_observations(truth: float = TRUTH, noise_sd: float = NOISE_SD, seed: int = 1001):
    """Synthetic data from the closed-form solution plus seeded Gaussian noise."""
    rng = np.random.default_rng(seed)
    clean = exact_solution(truth, OBS_POINTS)
    return clean + noise_sd * rng.standard_normal(OBS_POINTS.shape)


class Toy1DModel(Model):
    """Scalar Bayesian inverse problem with a tractable likelihood."""

    dim_D = 1
    base_offset = (0,)
    mutation_kind = "rwmh"

    def __init__(self, y: np.ndarray | None = None, noise_sd: float = NOISE_SD):
        self.y = np.asarray(y, dtype=float) if y is not None else generate_observations()
        if self.y.shape != OBS_POINTS.shape:
            raise ValueError("expected one observation per observation point")
        self.noise_sd = float(noise_sd)
        self._obs_factor: dict[int, np.ndarray] = {}

    def _factor(self, level: int) -> np.ndarray:
        # the FEM solution is linear in x: predicted = x * factor(level)
        if level not in self._obs_factor:
            nodal = fem1d_solve(1.0, level)
            self._obs_factor[level] = interpolate_nodal(nodal, OBS_POINTS)
        return self._obs_factor[level]

    def predicted(self, alpha: MultiIndex, X: np.ndarray) -> np.ndarray:
        level = self.resolution(alpha)[0]
        x = np.asarray(X, dtype=float).reshape(-1)
        return np.outer(x, self._factor(level))

    def exact_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        x = np.asarray(X, dtype=float).reshape(-1)
        pred = np.outer(x, exact_solution(1.0, OBS_POINTS))
        return gaussian_log_likelihood(pred, self.y, self.noise_sd)

    # -- Model interface ---------------------------------------------------
    def prior_sample(self, alpha, rng, n):
        return rng.uniform(-1.0, 1.0, size=(n, 1))

    def prior_log_density(self, alpha, X):
        x = np.asarray(X, dtype=float).reshape(-1)
        return np.where(np.abs(x) <= 1.0, 0.0, -np.inf)

    def log_likelihood(self, alpha, X):
        return gaussian_log_likelihood(self.predicted(alpha, X), self.y, self.noise_sd)

    def qoi(self, alpha, X):
        x = np.asarray(X, dtype=float).reshape(-1)
        return x * x

    def cost(self, alpha):
        return float(2.0 ** self.resolution(alpha)[0])
