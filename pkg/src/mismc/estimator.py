"""Multi-index estimators assembled from per-index coupled SMC runs.

The ratio estimator sums unbiased un-normalized increment estimates over an
index set and divides the quantity-of-interest sum by the normalizing-sum,
clamped below by z_min.  The self-normalized variant combines per-corner
normalized means instead.  Sample sizes per index come from the
variance/cost-optimal closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from mismc import rng as rngmod
from mismc.models.base import Model
from mismc.multiindex import IndexSet, MultiIndex
from mismc.smc import (
    CoupledRun,
    MutationKernel,
    SMCRunError,
    TemperingSchedule,
    estimate_F,
    psi_values,
    run_coupled_smc,
    run_smc,
)


@dataclass(frozen=True)
class AllocationPlan:
    """Per-index particle counts for a target root-mean-square error."""

    n_by_index: dict[MultiIndex, int]
    epsilon: float
    V: dict[MultiIndex, float] = field(default_factory=dict)
    C: dict[MultiIndex, float] = field(default_factory=dict)

    def __getitem__(self, alpha: MultiIndex) -> int:
        return self.n_by_index[alpha]

    @property
    def total_particles(self) -> int:
        return sum(self.n_by_index.values())

    @classmethod
    def uniform(cls, indices, N: int, epsilon: float = 0.0) -> "AllocationPlan":
        return cls({a: int(N) for a in indices}, epsilon)


def allocate_samples(V: dict, C: dict, epsilon: float, cap: int | None = None) -> AllocationPlan:
    """Cost-optimal sample sizes N_a = ceil(1 + eps^-2 (sum sqrt(VC)) sqrt(V/C)).

    V holds per-index variance proxies and C per-index cost units; both must
    be positive.  `cap` truncates each count from above.
    """
    if not V:
        raise ValueError("empty index set")
    if set(V) != set(C):
        raise ValueError("V and C must cover the same indices")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    for a in V:
        if V[a] <= 0 or C[a] <= 0:
            raise ValueError(f"non-positive V or C at index {a}")
    total = sum(math.sqrt(V[a] * C[a]) for a in sorted(V))
    n = {}
    for a in V:
        raw = epsilon**-2 * total * math.sqrt(V[a] / C[a])
        count = math.ceil(1.0 + raw)
        if cap is not None:
            count = min(count, int(cap))
        n[a] = max(count, 1)
    return AllocationPlan(n, epsilon, dict(V), dict(C))


@dataclass(frozen=True)
class IndexResult:
    """Outputs of one coupled-SMC run inside a multi-index estimate."""

    alpha: MultiIndex
    F_phi: float
    F_one: float
    N: int
    cost_units: float


@dataclass(frozen=True)
class EstimateReport:
    """Assembled multi-index estimate with its per-index breakdown."""

    kind: str
    per_index: tuple[IndexResult, ...]
    numerator: float
    denominator: float
    z_min: float
    clamped: bool
    estimate: float
    total_cost: float


def kahan_sum(values) -> float:
    """Compensated (Kahan-Neumaier) summation of a sequence of floats."""
    total = 0.0
    comp = 0.0
    for raw in values:
        v = float(raw)
        t = total + v
        if abs(total) >= abs(v):
            comp += (total - t) + v
        else:
            comp += (v - t) + total
        total = t
    return total + comp


def _coupled_runs(model, index_set, plan, schedule, kernel, master_seed, executor=None):
    indices = sorted(index_set.members)

    def one(alpha: MultiIndex) -> CoupledRun:
        gen = rngmod.stream(master_seed, rngmod.TAG_SMC, *rngmod.alpha_key(alpha))
        try:
            return run_coupled_smc(model, alpha, schedule, plan[alpha], kernel, gen)
        except SMCRunError as exc:
            raise SMCRunError(f"coupled SMC failed at index {alpha}: {exc}") from exc

    if executor is not None:
        runs = list(executor.map(one, indices))
    else:
        runs = [one(a) for a in indices]
    return indices, runs


def mismc_ratio_estimate(
    model: Model,
    index_set: IndexSet,
    plan: AllocationPlan,
    schedule: TemperingSchedule,
    kernel: MutationKernel,
    master_seed: int,
    z_min: float | None = None,
    executor=None,
) -> EstimateReport:
    """Ratio-of-sums estimate: sum F_a(psi_phi) / max(sum F_a(psi_1), z_min)."""
    indices, runs = _coupled_runs(model, index_set, plan, schedule, kernel, master_seed, executor)
    results = []
    for alpha, run in zip(indices, runs):
        F_phi = estimate_F(run, psi_values(run, model, use_qoi=True))
        F_one = estimate_F(run, psi_values(run, model, use_qoi=False))
        results.append(IndexResult(alpha, F_phi, F_one, run.N, run.cost_units))
    numerator = kahan_sum(r.F_phi for r in results)
    denominator = kahan_sum(r.F_one for r in results)
    z_lo = float(z_min) if z_min is not None else model.z_min()
    clamped = denominator < z_lo
    estimate = numerator / max(denominator, z_lo)
    return EstimateReport(
        kind="ratio",
        per_index=tuple(results),
        numerator=numerator,
        denominator=denominator,
        z_min=z_lo,
        clamped=clamped,
        estimate=estimate,
        total_cost=kahan_sum(r.cost_units for r in results),
    )


def mismc_sn_estimate(
    model: Model,
    index_set: IndexSet,
    plan: AllocationPlan,
    schedule: TemperingSchedule,
    kernel: MutationKernel,
    master_seed: int,
    executor=None,
) -> EstimateReport:
    """Self-normalized baseline: signed sum of per-corner normalized means."""
    indices, runs = _coupled_runs(model, index_set, plan, schedule, kernel, master_seed, executor)
    results = []
    contributions = []
    for alpha, run in zip(indices, runs):
        omega = np.exp(run.corner_loglik - run.coupled_loglik[:, None])
        phi = model.corner_qoi(alpha, run.particles)
        wsum = omega.sum(axis=0)
        if np.any(wsum <= 0):
            raise SMCRunError(f"zero corner-weight sum at index {alpha} (coupling degeneracy)")
        sn_means = (omega * phi).sum(axis=0) / wsum
        signs = np.array([c.sign for c in run.corner_list], dtype=float)
        contrib = float(np.dot(signs, sn_means))
        contributions.append(contrib)
        results.append(IndexResult(alpha, contrib, 1.0, run.N, run.cost_units))
    total = kahan_sum(contributions)
    return EstimateReport(
        kind="self-normalized",
        per_index=tuple(results),
        numerator=total,
        denominator=1.0,
        z_min=0.0,
        clamped=False,
        estimate=total,
        total_cost=kahan_sum(r.cost_units for r in results),
    )


def single_level_smc_estimate(
    model: Model,
    alpha: MultiIndex,
    N: int,
    schedule: TemperingSchedule,
    kernel: MutationKernel,
    seed: int,
) -> tuple[float, float]:
    """Posterior mean of the QoI at a fixed index via one tempered SMC run.

    Returns (estimate, cost_units).
    """
    gen = rngmod.stream(seed, rngmod.TAG_SMC, *rngmod.alpha_key(alpha))
    particles, _ = run_smc(model, alpha, schedule, N, kernel, gen)
    estimate = float(np.mean(model.qoi(alpha, particles)))
    cost = N * schedule.J * (1 + kernel.n_steps) * model.cost(alpha)
    return estimate, cost


def pilot_variances(
    model: Model,
    index_set: IndexSet,
    schedule: TemperingSchedule,
    kernel: MutationKernel,
    master_seed: int,
    n_pilot: int = 100,
    executor=None,
    cache: dict | None = None,
) -> tuple[dict, dict]:
    """Per-index variance proxies and costs for the sample allocation.

    One small coupled run per index; the variance proxy is the per-particle
    variance of Z_hat * psi, maximized over the two integrands (QoI and
    constant one) and normalized by the squared pilot denominator so the
    target epsilon is on the scale of the final ratio.  Costs are
    per-particle model-cost units.

    The per-index pilot statistics depend only on (alpha, seed), not on the
    index set, so an optional `cache` dict lets nested index sets (an eps
    ladder) reuse runs; only the normalization is set-dependent.
    """
    indices = sorted(index_set.members)

    def one(alpha: MultiIndex):
        if cache is not None and alpha in cache:
            return cache[alpha]
        gen = rngmod.stream(master_seed, rngmod.TAG_PILOT, *rngmod.alpha_key(alpha))
        run = run_coupled_smc(model, alpha, schedule, n_pilot, kernel, gen)
        z = math.exp(run.log_z)
        v = 0.0
        for use_qoi in (True, False):
            psi = psi_values(run, model, use_qoi)
            v = max(v, z * z * float(np.var(psi)))
        f_one = estimate_F(run, psi_values(run, model, use_qoi=False))
        cost_per_particle = run.cost_units / run.N
        triple = (max(v, 1e-30), cost_per_particle, f_one)
        if cache is not None:
            cache[alpha] = triple
        return triple

    if executor is not None:
        triples = list(executor.map(one, indices))
    else:
        triples = [one(a) for a in indices]
    denom = abs(kahan_sum(t[2] for t in triples))
    scale = 1.0 / max(denom, 1e-12) ** 2
    V = {a: t[0] * scale for a, t in zip(indices, triples)}
    C = {a: t[1] for a, t in zip(indices, triples)}
    return V, C


def tp_levels_for_epsilon(epsilon: float, s: tuple[float, ...]) -> tuple[int, ...]:
    """Per-axis maximum levels for a tensor-product set at target accuracy.

    L_i = ceil(log2(D / epsilon) / s_i) with D the number of axes.
    """
    if epsilon <= 0 or epsilon >= 1:
        raise ValueError("epsilon must lie in (0, 1)")
    D = len(s)
    return tuple(max(0, math.ceil(math.log2(D / epsilon) / si)) for si in s)


def td_level_for_epsilon(epsilon: float, s: tuple[float, ...], delta: tuple[float, ...]) -> int:
    """Scalar level bound for a total-degree set at target accuracy.

    Uses A1 = min_i log(2) s_i / delta_i and the epsilon^-1 log-correction
    with exponent 2(n1 - 1), n1 the multiplicity of the minimizer.
    """
    if epsilon <= 0 or epsilon >= 1:
        raise ValueError("epsilon must lie in (0, 1)")
    ratios = [math.log(2.0) * si / di for si, di in zip(s, delta)]
    a1 = min(ratios)
    n1 = sum(1 for r in ratios if abs(r - a1) < 1e-12)
    log_inv = math.log(1.0 / epsilon)
    L = math.log((1.0 / epsilon) * max(log_inv, 1.0) ** (2 * (n1 - 1))) / a1
    return max(1, math.ceil(L))
