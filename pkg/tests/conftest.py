import numpy as np

from mismc.models.base import Model


class ConstantLikelihoodModel(Model):
    """Uniform prior on [-1, 1], likelihood identically one, QoI x^2.

    Posterior equals prior and every normalizing constant is exactly 1,
    which pins down most estimator identities.
    """

    dim_D = 1
    base_offset = (0,)
    mutation_kind = "rwmh"

    def prior_sample(self, alpha, rng, n):
        return rng.uniform(-1.0, 1.0, size=(n, 1))

    def prior_log_density(self, alpha, X):
        x = np.asarray(X, dtype=float).reshape(-1)
        return np.where(np.abs(x) <= 1.0, 0.0, -np.inf)

    def log_likelihood(self, alpha, X):
        return np.zeros(np.atleast_2d(X).shape[0])

    def qoi(self, alpha, X):
        x = np.asarray(X, dtype=float).reshape(-1)
        return x * x

    def cost(self, alpha):
        return float(2.0 ** self.resolution(alpha)[0])


class PlantedRateModel(Model):
    """Deterministic separable likelihood with exactly geometric increments.

    L_alpha(x) = prod_i (1 + x_i * 2^{-s_i alpha_i}) with x_i in (0, 1/2), so
    the mixed increment of L factorizes, decays at exactly the planted rates,
    and has closed-form mean (E x = 1/4) and second moment (E x^2 = 1/12).
    """

    mutation_kind = "rwmh"

    def __init__(self, s=(2.0, 2.0)):
        self.s = tuple(s)
        self.dim_D = len(s)
        self.base_offset = (0,) * len(s)

    def prior_sample(self, alpha, rng, n):
        return rng.uniform(0.0, 0.5, size=(n, self.dim_D))

    def prior_log_density(self, alpha, X):
        X = np.atleast_2d(X)
        inside = np.all((X >= 0.0) & (X <= 0.5), axis=1)
        return np.where(inside, np.log(2.0) * self.dim_D, -np.inf)

    def log_likelihood(self, alpha, X):
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for i, (a, s) in enumerate(zip(alpha, self.s)):
            out += np.log1p(X[:, i] * 2.0 ** (-s * a))
        return out

    def qoi(self, alpha, X):
        return np.ones(np.atleast_2d(X).shape[0])

    def cost(self, alpha):
        return float(2.0 ** sum(alpha))
