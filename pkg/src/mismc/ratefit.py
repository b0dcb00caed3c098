"""Empirical rate estimation for multi-index increments.

Estimates the decay of the mean and second moment of the mixed increment
Delta(L_alpha * zeta_alpha) under the prior, then fits log2-linear rates
along coordinate lines or diagonals.  These are the constants that drive
index-set truncation and sample allocation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from mismc import rng as rngmod
from mismc.models.base import Model
from mismc.multiindex import MultiIndex, corners
from mismc.smc import MutationKernel, TemperingSchedule, estimate_F, psi_values, run_coupled_smc

# samples-times-corners budget for one prior-evaluation batch
_BATCH_LIMIT = 200_000


@dataclass(frozen=True)
class IncrementStats:
    """Monte Carlo summary of Delta(L_alpha * zeta_alpha) at one index.

    `abs_mean` is the first absolute moment E|Delta|.  For increments
    dominated by a systematic discretization error it coincides with
    |mean| and decays at the weak rate; for increments that fluctuate
    around zero (rough random-field models) the signed mean cancels to
    the noise floor while E|Delta| tracks the increment scale, so it is
    the robust statistic for fitting the s-rate at moderate sample sizes.
    When not supplied it defaults to |mean| (exact for noise-free
    synthetic stats).
    """

    alpha: MultiIndex
    mean: float
    second_moment: float
    se_mean: float
    se_second: float
    n_samples: int
    n_realisations: int
    abs_mean: float | None = None
    se_abs: float | None = None

    def __post_init__(self):
        if self.abs_mean is None:
            object.__setattr__(self, "abs_mean", abs(self.mean))
        if self.se_abs is None:
            object.__setattr__(self, "se_abs", self.se_mean)


@dataclass(frozen=True)
class RateFit:
    """Least-squares log2-linear fit along a line of indices."""

    slope: float
    intercept: float
    residual_rms: float
    kind: str
    n_points: int
    n_dropped: int


def _increment_values(model: Model, alpha: MultiIndex, X: np.ndarray, use_qoi: bool) -> np.ndarray:
    """Delta(L_alpha * zeta_alpha) for each prior draw in X."""
    ll = model.corner_log_likelihoods(alpha, X)
    if use_qoi:
        zeta = model.corner_qoi(alpha, X)
    else:
        zeta = np.ones_like(ll)
    signs = np.array([c.sign for c in corners(alpha)], dtype=float)
    shift = ll.max(axis=1, keepdims=True)
    inner = (signs * np.exp(ll - shift) * zeta).sum(axis=1)
    return np.exp(shift[:, 0]) * inner


def estimate_increment_stats(
    model: Model,
    alpha: MultiIndex,
    n_samples: int,
    use_qoi: bool,
    rng: np.random.Generator,
    n_realisations: int = 1,
) -> IncrementStats:
    """Prior-sampling estimate of the increment mean and second moment.

    With n_realisations > 1, draws that many independent batches and reports
    standard errors across batch statistics; with one batch the standard
    errors come from the per-sample spread.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples per realisation")
    if n_realisations < 1:
        raise ValueError("need at least one realisation")
    k = len(corners(alpha))
    chunk = max(1, min(_BATCH_LIMIT // max(k, 1), model.suggested_batch(alpha)))
    batch_means = np.empty(n_realisations)
    batch_seconds = np.empty(n_realisations)
    batch_abs = np.empty(n_realisations)
    last_vals = None
    for b in range(n_realisations):
        vals = np.empty(n_samples)
        for lo in range(0, n_samples, chunk):
            hi = min(n_samples, lo + chunk)
            X = model.prior_sample(alpha, rng, hi - lo)
            vals[lo:hi] = _increment_values(model, alpha, X, use_qoi)
        batch_means[b] = vals.mean()
        batch_seconds[b] = np.mean(vals * vals)
        batch_abs[b] = np.mean(np.abs(vals))
        last_vals = vals
    mean = float(batch_means.mean())
    second = float(batch_seconds.mean())
    abs_mean = float(batch_abs.mean())
    if n_realisations > 1:
        se_mean = float(batch_means.std(ddof=1) / math.sqrt(n_realisations))
        se_second = float(batch_seconds.std(ddof=1) / math.sqrt(n_realisations))
        se_abs = float(batch_abs.std(ddof=1) / math.sqrt(n_realisations))
    else:
        se_mean = float(last_vals.std(ddof=1) / math.sqrt(n_samples))
        sq = last_vals * last_vals
        se_second = float(sq.std(ddof=1) / math.sqrt(n_samples))
        se_abs = float(np.abs(last_vals).std(ddof=1) / math.sqrt(n_samples))
    return IncrementStats(
        alpha=alpha,
        mean=mean,
        second_moment=second,
        se_mean=se_mean,
        se_second=se_second,
        n_samples=n_samples,
        n_realisations=n_realisations,
        abs_mean=abs_mean,
        se_abs=se_abs,
    )


def estimate_increment_stats_smc(
    model: Model,
    alpha: MultiIndex,
    n_samples: int,
    use_qoi: bool,
    schedule: TemperingSchedule,
    kernel: MutationKernel,
    master_seed: int,
    n_realisations: int = 20,
) -> IncrementStats:
    """Cross-check mode: statistics of F_alpha^N(psi) over repeated SMC runs."""
    if n_realisations < 2:
        raise ValueError("need at least two SMC repeats")
    vals = np.empty(n_realisations)
    for b in range(n_realisations):
        gen = rngmod.stream(master_seed, rngmod.TAG_RATE, b, *rngmod.alpha_key(alpha))
        run = run_coupled_smc(model, alpha, schedule, n_samples, kernel, gen)
        vals[b] = estimate_F(run, psi_values(run, model, use_qoi))
    mean = float(vals.mean())
    second = float(np.mean(vals * vals))
    se = float(vals.std(ddof=1) / math.sqrt(n_realisations))
    sq = vals * vals
    return IncrementStats(
        alpha=alpha,
        mean=mean,
        second_moment=second,
        se_mean=se,
        se_second=float(sq.std(ddof=1) / math.sqrt(n_realisations)),
        n_samples=n_samples,
        n_realisations=n_realisations,
        abs_mean=float(np.mean(np.abs(vals))),
        se_abs=float(np.abs(vals).std(ddof=1) / math.sqrt(n_realisations)),
    )


def fit_loglinear(t: np.ndarray, values: np.ndarray) -> tuple[float, float, float]:
    """Least squares of log2(values) against t; returns (slope, intercept, residual RMS)."""
    t = np.asarray(t, dtype=float)
    y = np.log2(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid * resid)))


def fit_rates(
    stats: list[IncrementStats],
    direction: tuple[float, ...],
    statistic: str = "mean",
    kind: str = "axis",
) -> RateFit:
    """Fit log2 of an increment statistic against <alpha, direction>.

    statistic "mean" uses |mean| and drops sign-indeterminate points whose
    |mean| < 2 * SE; "abs_mean" uses the first absolute moment E|Delta|
    (no sign indeterminacy, so only non-positive values are dropped);
    "second_moment" uses the raw second moment.  At least three surviving
    points are required.
    """
    if statistic not in ("mean", "abs_mean", "second_moment"):
        raise ValueError(f"unknown statistic: {statistic}")
    ts, ys = [], []
    dropped = 0
    for s in stats:
        t = float(sum(a * d for a, d in zip(s.alpha, direction)))
        if statistic == "mean":
            y = abs(s.mean)
            if y < 2.0 * s.se_mean or y <= 0.0:
                dropped += 1
                warnings.warn(
                    f"dropping index {s.alpha}: |mean| {y:.3g} below noise floor "
                    f"(2*SE = {2*s.se_mean:.3g})",
                    stacklevel=2,
                )
                continue
        elif statistic == "abs_mean":
            y = s.abs_mean
            if y <= 0.0:
                dropped += 1
                warnings.warn(f"dropping index {s.alpha}: non-positive E|increment|", stacklevel=2)
                continue
        else:
            y = s.second_moment
            if y <= 0.0:
                dropped += 1
                warnings.warn(f"dropping index {s.alpha}: non-positive second moment", stacklevel=2)
                continue
        ts.append(t)
        ys.append(y)
    if len(ts) < 3:
        raise ValueError(f"need at least 3 usable points for a rate fit, got {len(ts)}")
    slope, intercept, rms = fit_loglinear(np.array(ts), np.array(ys))
    return RateFit(slope, intercept, rms, kind, len(ts), dropped)


def fit_cost_rate(model: Model, alphas: list[MultiIndex], direction: tuple[float, ...]) -> RateFit:
    """Fit log2(model-cost units) against <alpha, direction> (the gamma rate)."""
    if len(alphas) < 3:
        raise ValueError("need at least 3 indices for a cost fit")
    t = np.array([sum(a * d for a, d in zip(al, direction)) for al in alphas], dtype=float)
    c = np.array([model.cost(al) for al in alphas])
    slope, intercept, rms = fit_loglinear(t, c)
    return RateFit(slope, intercept, rms, "cost", len(alphas), 0)


def line_indices(dim: int, axis: int | None, lo: int, hi: int, frozen: int = 0):
    """Indices along one axis (others frozen) or along the diagonal (axis=None)."""
    out = []
    for v in range(lo, hi + 1):
        if axis is None:
            out.append(MultiIndex((v,) * dim))
        else:
            entries = [frozen] * dim
            entries[axis] = v
            out.append(MultiIndex(tuple(entries)))
    return out
