"""Common interface for the shipped Bayesian inverse problems.

A model exposes prior sampling, the log-likelihood at a resolution
multi-index, a quantity of interest, and a cost model.  Indices are
zero-based; each model adds its own base offset when mapping an index to an
actual mesh/truncation size.  Instances are immutable after construction
and all evaluations are pure, so they are safe to share across workers.
"""
from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from mismc import rng as rngmod
from mismc.multiindex import MultiIndex, corners


class ModelError(RuntimeError):
    """Raised when a model evaluation fails (non-finite values, no convergence)."""


class Model(ABC):
    dim_D: int
    base_offset: tuple[int, ...]
    mutation_kind: str = "rwmh"  # default MCMC proposal family

    def resolution(self, alpha: MultiIndex) -> tuple[int, ...]:
        """Index mapped to actual resolution exponents (offset applied)."""
        return tuple(a + o for a, o in zip(alpha, self.base_offset))

    @abstractmethod
    def prior_sample(self, alpha: MultiIndex, rng: np.random.Generator, n: int) -> np.ndarray:
        """n prior draws of the parameter state sized for index alpha, shape (n, dim)."""

    @abstractmethod
    def log_likelihood(self, alpha: MultiIndex, X: np.ndarray) -> np.ndarray:
        """Resolution-alpha log-likelihood of each state, shape (n,)."""

    @abstractmethod
    def qoi(self, alpha: MultiIndex, X: np.ndarray) -> np.ndarray:
        """Quantity of interest at resolution alpha, shape (n,)."""

    @abstractmethod
    def cost(self, alpha: MultiIndex) -> float:
        """Model-cost units of one likelihood evaluation at alpha."""

    def suggested_batch(self, alpha: MultiIndex) -> int:
        """Upper bound on how many states to hold in memory at once."""
        return 10**9

    def prior_log_density(self, alpha: MultiIndex, X: np.ndarray) -> np.ndarray:
        """Unnormalized prior log-density (-inf outside the support)."""
        raise NotImplementedError

    def restrict_state(self, alpha: MultiIndex, corner: MultiIndex, X: np.ndarray) -> np.ndarray:
        """Project a state sampled for alpha onto the corner's parameter space.

        The identity for fixed-dimension models; overridden when the state
        dimension grows with resolution.
        """
        return X

    def corner_log_likelihoods(self, alpha: MultiIndex, X: np.ndarray) -> np.ndarray:
        """Log-likelihood of the shared state at every corner of alpha, shape (n, k)."""
        cs = corners(alpha)
        out = np.empty((X.shape[0], len(cs)))
        for j, c in enumerate(cs):
            out[:, j] = self.log_likelihood(c.index, self.restrict_state(alpha, c.index, X))
        return out

    def corner_qoi(self, alpha: MultiIndex, X: np.ndarray) -> np.ndarray:
        """QoI of the shared state at every corner of alpha, shape (n, k)."""
        cs = corners(alpha)
        out = np.empty((X.shape[0], len(cs)))
        for j, c in enumerate(cs):
            out[:, j] = self.qoi(c.index, self.restrict_state(alpha, c.index, X))
        return out

    # -- denominator clamp -------------------------------------------------
    _z_min_override: float | None = None
    _z_min_cache: float | None = None

    def z_min(self) -> float:
        """Lower clamp for the normalizing-constant denominator.

        Half of a fixed-seed Monte Carlo pilot estimate of the coarsest-index
        normalizing constant, unless overridden via configuration.
        """
        if self._z_min_override is not None:
            return self._z_min_override
        if self._z_min_cache is None:
            alpha0 = MultiIndex((0,) * self.dim_D)
            gen = rngmod.stream(202406, rngmod.TAG_PILOT, 0)
            X = self.prior_sample(alpha0, gen, 2000)
            ell = self.log_likelihood(alpha0, X)
            m = float(np.max(ell))
            z_hat = float(np.exp(m) * np.mean(np.exp(ell - m)))
            self._z_min_cache = 0.5 * z_hat
        return self._z_min_cache

    def set_z_min(self, value: float) -> None:
        self._z_min_override = float(value)


def gaussian_log_likelihood(predicted: np.ndarray, y: np.ndarray, noise_sd: float) -> np.ndarray:
    """Unnormalized Gaussian log-likelihood -0.5 * sum((y - pred)/sd)^2.

    `predicted` may be (m,) or a batch (n, m); returns scalar or (n,).
    """
    predicted = np.asarray(predicted, dtype=float)
    y = np.asarray(y, dtype=float)
    if predicted.shape[-1] != y.shape[-1]:
        raise ValueError("predicted and observation lengths differ")
    resid = (y - predicted) / noise_sd
    return -0.5 * np.sum(resid * resid, axis=-1)


class DiagonalLevelModel(Model):
    """One-axis view of a multi-axis model, used by the multilevel baselines.

    Level l maps to the inner index (l, ..., l); first differences of this
    view are the multilevel increments.
    """

    def __init__(self, inner: Model):
        self.inner = inner
        self.dim_D = 1
        self.base_offset = (0,)
        self.mutation_kind = inner.mutation_kind

    def _diag(self, alpha: MultiIndex) -> MultiIndex:
        return MultiIndex((alpha[0],) * self.inner.dim_D)

    def prior_sample(self, alpha, rng, n):
        return self.inner.prior_sample(self._diag(alpha), rng, n)

    def log_likelihood(self, alpha, X):
        return self.inner.log_likelihood(self._diag(alpha), X)

    def qoi(self, alpha, X):
        return self.inner.qoi(self._diag(alpha), X)

    def cost(self, alpha):
        return self.inner.cost(self._diag(alpha))

    def prior_log_density(self, alpha, X):
        return self.inner.prior_log_density(self._diag(alpha), X)

    def restrict_state(self, alpha, corner, X):
        return self.inner.restrict_state(self._diag(alpha), self._diag(corner), X)

    def suggested_batch(self, alpha):
        return self.inner.suggested_batch(self._diag(alpha))

    def z_min(self):
        return self.inner.z_min()
