"""Tempered SMC samplers for single and coupled targets.

The coupled sampler runs on the shared-state (Dirac) coupling of the prior:
one underlying parameter state per particle, evaluated at every corner
resolution of the index.  The bridging likelihood is the maximum of the
corner likelihoods, and the running product of mean incremental weights
gives an unbiased estimator of un-normalized integrals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mismc.models.base import Model
from mismc.multiindex import MultiIndex, SignedCorner, corners


class SMCRunError(RuntimeError):
    """An SMC run hit a degenerate or non-finite configuration."""


@dataclass(frozen=True)
class TemperingSchedule:
    """Exponents bridging prior (0) to posterior (1)."""

    taus: tuple[float, ...]

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        object.__setattr__(self, "taus", taus)
        if len(taus) == 0:
            raise ValueError("empty tempering schedule")
        if len(taus) == 1:
            return  # degenerate single stage: prior only, Z = 1
        if taus[0] != 0.0 or taus[-1] != 1.0:
            raise ValueError("schedule must start at 0 and end at 1")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("schedule must be strictly increasing")

    @classmethod
    def uniform(cls, J: int) -> "TemperingSchedule":
        if J < 2:
            return cls((0.0,))
        return cls(tuple(j / (J - 1) for j in range(J)))

    @property
    def J(self) -> int:
        return len(self.taus)


@dataclass(frozen=True)
class MutationKernel:
    """MCMC jitter configuration applied after each resampling step.

    kind "rwmh": symmetric Gaussian random walk on the raw state.
    kind "pcn": autoregressive prior-preserving proposal; acceptance uses
    the tempered likelihood only.  The scale (step size resp. rho) adapts
    between stages toward an acceptance rate in [accept_low, accept_high]
    and is frozen within a stage.
    """

    kind: str = "rwmh"
    n_steps: int = 5
    scale: float = 0.5
    accept_low: float = 0.2
    accept_high: float = 0.5
    adapt: bool = True

    def __post_init__(self):
        if self.kind not in ("rwmh", "pcn"):
            raise ValueError(f"unknown mutation kernel kind: {self.kind}")


@dataclass
class CoupledRun:
    """Completed coupled-SMC run at one index."""

    alpha: MultiIndex
    corner_list: tuple[SignedCorner, ...]
    particles: np.ndarray           # (N, dim) final states, uniform weights
    corner_loglik: np.ndarray       # (N, k) log-likelihood at each corner
    log_z: float                    # log of the unbiased Z estimator
    schedule: TemperingSchedule
    acceptance: tuple[float, ...] = ()
    cost_units: float = 0.0

    @property
    def N(self) -> int:
        return self.particles.shape[0]

    @property
    def coupled_loglik(self) -> np.ndarray:
        return self.corner_loglik.max(axis=1)


def resample_multinomial(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. categorical ancestor draws, one per particle."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("negative resampling weight")
    total = weights.sum()
    if total <= 0:
        raise SMCRunError("all resampling weights are zero (degenerate likelihood)")
    cdf = np.cumsum(weights / total)
    cdf[-1] = 1.0
    u = rng.random(weights.shape[0])
    return np.searchsorted(cdf, u, side="left")


def resample_systematic(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Low-variance systematic resampling (off by default)."""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        raise SMCRunError("all resampling weights are zero (degenerate likelihood)")
    n = weights.shape[0]
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights / total), positions, side="left")


def mh_mutate(
    model: Model,
    alpha: MultiIndex,
    X: np.ndarray,
    corner_ll: np.ndarray,
    tau: float,
    kernel: MutationKernel,
    scale: float,
    rng: np.random.Generator,
):
    """n_steps Metropolis-Hastings sweeps targeting L_alpha^tau * prior.

    Returns (X, corner_ll, acceptance_rate).  The cached corner
    log-likelihoods are updated alongside the states so callers never
    re-evaluate the current particles.
    """
    N = X.shape[0]
    ell = corner_ll.max(axis=1)
    accepted = 0
    for _ in range(kernel.n_steps):
        if kernel.kind == "rwmh":
            noise = rng.standard_normal(X.shape)
            prop = X + scale * noise
            lp_cur = model.prior_log_density(alpha, X)
            lp_prop = model.prior_log_density(alpha, prop)
            in_support = np.isfinite(lp_prop)
        else:  # pcn
            fresh = model.prior_sample(alpha, rng, N)
            prop = np.sqrt(1.0 - scale**2) * X + scale * fresh
            lp_cur = np.zeros(N)
            lp_prop = np.zeros(N)
            in_support = np.ones(N, dtype=bool)

        prop_ll = np.full_like(corner_ll, -np.inf)
        if np.any(in_support):
            prop_ll[in_support] = model.corner_log_likelihoods(alpha, prop[in_support])
        prop_ell = prop_ll.max(axis=1)

        log_ratio = tau * (prop_ell - ell) + (lp_prop - lp_cur)
        log_ratio = np.where(in_support, log_ratio, -np.inf)
        # draw uniforms for every particle to keep the stream layout fixed
        u = rng.random(N)
        accept = np.log(u) < log_ratio
        X[accept] = prop[accept]
        corner_ll[accept] = prop_ll[accept]
        ell[accept] = prop_ell[accept]
        accepted += int(accept.sum())
    rate = accepted / (N * kernel.n_steps) if kernel.n_steps else 1.0
    return X, corner_ll, rate


def _adapt_scale(kernel: MutationKernel, scale: float, rate: float) -> float:
    if not kernel.adapt:
        return scale
    if rate < kernel.accept_low:
        scale = scale / 1.5
    elif rate > kernel.accept_high:
        scale = scale * 1.5
    if kernel.kind == "pcn":
        scale = min(scale, 1.0)
    return scale


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    if not np.isfinite(m):
        return m
    return m + float(np.log(np.sum(np.exp(v - m))))


def _run(
    model: Model,
    alpha: MultiIndex,
    corner_list: tuple[SignedCorner, ...],
    schedule: TemperingSchedule,
    N: int,
    kernel: MutationKernel,
    rng: np.random.Generator,
    systematic: bool = False,
) -> CoupledRun:
    if N < 1:
        raise ValueError("need at least one particle")
    taus = schedule.taus
    X = model.prior_sample(alpha, rng, N)
    if len(corner_list) == 1 and corner_list[0].index == alpha:
        corner_ll = model.log_likelihood(alpha, X)[:, None]
    else:
        corner_ll = model.corner_log_likelihoods(alpha, X)
    if not np.all(np.isfinite(corner_ll)):
        raise SMCRunError(
            f"non-finite log-likelihood at a prior draw for index {alpha} "
            "(model/resolution bug)"
        )

    log_z = 0.0
    scale = kernel.scale
    accept_hist = []
    resample = resample_systematic if systematic else resample_multinomial
    for j in range(1, len(taus)):
        dtau = taus[j] - taus[j - 1]
        ell = corner_ll.max(axis=1)
        logw = dtau * ell
        log_z += _logsumexp(logw) - np.log(N)
        shifted = np.exp(logw - np.max(logw))
        if shifted.sum() <= 0 or not np.all(np.isfinite(shifted)):
            raise SMCRunError(f"degenerate incremental weights at stage {j} for {alpha}")
        idx = resample(shifted, rng)
        X = X[idx].copy()
        corner_ll = corner_ll[idx].copy()
        if len(corner_list) == 1 and corner_list[0].index == alpha:
            # single-target run: mutate with the plain likelihood
            X, single_ll, rate = _mutate_single(model, alpha, X, corner_ll[:, 0], taus[j], kernel, scale, rng)
            corner_ll = single_ll[:, None]
        else:
            X, corner_ll, rate = mh_mutate(model, alpha, X, corner_ll, taus[j], kernel, scale, rng)
        accept_hist.append(rate)
        scale = _adapt_scale(kernel, scale, rate)

    cost_units = N * schedule.J * (1 + kernel.n_steps) * model.cost(alpha)
    return CoupledRun(
        alpha=alpha,
        corner_list=corner_list,
        particles=X,
        corner_loglik=corner_ll,
        log_z=log_z,
        schedule=schedule,
        acceptance=tuple(accept_hist),
        cost_units=cost_units,
    )


def _mutate_single(model, alpha, X, ll, tau, kernel, scale, rng):
    """MH sweeps for the single-target sampler (avoids corner machinery)."""
    N = X.shape[0]
    accepted = 0
    for _ in range(kernel.n_steps):
        if kernel.kind == "rwmh":
            prop = X + scale * rng.standard_normal(X.shape)
            lp_cur = model.prior_log_density(alpha, X)
            lp_prop = model.prior_log_density(alpha, prop)
            in_support = np.isfinite(lp_prop)
        else:
            fresh = model.prior_sample(alpha, rng, N)
            prop = np.sqrt(1.0 - scale**2) * X + scale * fresh
            lp_cur = np.zeros(N)
            lp_prop = np.zeros(N)
            in_support = np.ones(N, dtype=bool)
        prop_ll = np.full(N, -np.inf)
        if np.any(in_support):
            prop_ll[in_support] = model.log_likelihood(alpha, prop[in_support])
        log_ratio = np.where(in_support, tau * (prop_ll - ll) + (lp_prop - lp_cur), -np.inf)
        u = rng.random(N)
        accept = np.log(u) < log_ratio
        X[accept] = prop[accept]
        ll[accept] = prop_ll[accept]
        accepted += int(accept.sum())
    rate = accepted / (N * kernel.n_steps) if kernel.n_steps else 1.0
    return X, ll, rate


def run_smc(
    model: Model,
    alpha: MultiIndex,
    schedule: TemperingSchedule,
    N: int,
    kernel: MutationKernel,
    rng: np.random.Generator,
    systematic: bool = False,
) -> tuple[np.ndarray, float]:
    """Single-chain tempered SMC at a fixed index.

    Returns the final equally-weighted particles and the unbiased estimate
    of the normalizing constant Z_alpha.
    """
    run = _run(model, alpha, (SignedCorner(alpha, 1),), schedule, N, kernel, rng, systematic)
    return run.particles, float(np.exp(run.log_z))


def run_coupled_smc(
    model: Model,
    alpha: MultiIndex,
    schedule: TemperingSchedule,
    N: int,
    kernel: MutationKernel,
    rng: np.random.Generator,
    systematic: bool = False,
) -> CoupledRun:
    """Coupled tempered SMC at a fixed index (all corners on the shared state)."""
    return _run(model, alpha, tuple(corners(alpha)), schedule, N, kernel, rng, systematic)


def signed_psi(run: CoupledRun, zeta_by_corner: np.ndarray) -> np.ndarray:
    """Per-particle signed weighted combination over corners.

    zeta_by_corner holds the per-corner QoI values of each particle,
    shape (N, k) in the run's corner order.  The weight of corner k is the
    ratio of its likelihood to the coupled (max) likelihood.
    """
    zeta = np.asarray(zeta_by_corner, dtype=float)
    if zeta.shape != run.corner_loglik.shape:
        raise ValueError("zeta values must match (N, corners)")
    ell = run.coupled_loglik
    omega = np.exp(run.corner_loglik - ell[:, None])
    signs = np.array([c.sign for c in run.corner_list], dtype=float)
    return (signs * omega * zeta).sum(axis=1)


def psi_values(run: CoupledRun, model: Model, use_qoi: bool) -> np.ndarray:
    """signed_psi with either the model QoI or the constant 1 at each corner."""
    if use_qoi:
        zeta = model.corner_qoi(run.alpha, run.particles)
    else:
        zeta = np.ones_like(run.corner_loglik)
    return signed_psi(run, zeta)


def estimate_F(run: CoupledRun, psi: np.ndarray) -> float:
    """Unbiased un-normalized estimate: Z_alpha^N times the particle mean of psi."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape[0] != run.N:
        raise ValueError("psi must have one value per particle")
    return float(np.exp(run.log_z) * psi.mean())
