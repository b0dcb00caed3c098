import itertools
import math

import numpy as np
import pytest

from conftest import ConstantLikelihoodModel
from mismc.estimator import (
    AllocationPlan,
    allocate_samples,
    kahan_sum,
    mismc_ratio_estimate,
    mismc_sn_estimate,
    pilot_variances,
    single_level_smc_estimate,
    td_level_for_epsilon,
    tp_levels_for_epsilon,
)
from mismc.models import Toy1DModel
from mismc.multiindex import IndexSet, mi, mixed_difference, tensor_product_set
from mismc.smc import MutationKernel, SMCRunError, TemperingSchedule

SCHED = TemperingSchedule.uniform(10)
KERNEL = MutationKernel(kind="rwmh")


class TestAllocation:
    def test_hand_computed_two_index_case(self):
        # V=(4,1), C=(1,4), eps=1: sum sqrt(VC) = 4, raw N = (8, 2),
        # emitted (9, 3) after the +1 and ceiling
        plan = allocate_samples({mi(0): 4.0, mi(1): 1.0}, {mi(0): 1.0, mi(1): 4.0}, 1.0)
        assert plan.n_by_index == {mi(0): 9, mi(1): 3}

    def test_single_index_collapse(self):
        # one index: N = ceil(1 + V / eps^2)
        plan = allocate_samples({mi(0): 2.0}, {mi(0): 7.0}, 0.5)
        assert plan[mi(0)] == math.ceil(1.0 + 2.0 / 0.25)

    def test_geometric_schedule(self):
        # V = 2^{-4a}, C = 2^a gives N decaying by ~2^{-5/2} per level
        V = {mi(a): 2.0 ** (-4 * a) for a in range(6)}
        C = {mi(a): 2.0**a for a in range(6)}
        plan = allocate_samples(V, C, 0.001)
        raws = [plan[mi(a)] - 1 for a in range(5)]
        ratios = [raws[a + 1] / raws[a] for a in range(4)]
        assert np.allclose(ratios, 2.0 ** (-2.5), rtol=0.01)

    def test_validation(self):
        with pytest.raises(ValueError):
            allocate_samples({}, {}, 1.0)
        with pytest.raises(ValueError):
            allocate_samples({mi(0): 1.0}, {mi(0): 1.0}, 0.0)
        with pytest.raises(ValueError):
            allocate_samples({mi(0): -1.0}, {mi(0): 1.0}, 1.0)
        with pytest.raises(ValueError):
            allocate_samples({mi(0): 1.0}, {mi(1): 1.0}, 1.0)

    def test_cap(self):
        plan = allocate_samples({mi(0): 100.0}, {mi(0): 1.0}, 0.01, cap=500)
        assert plan[mi(0)] == 500

    def test_brute_force_optimality(self):
        # Cauchy-Schwarz: any schedule with sum V/N <= eps^2 costs at least
        # eps^-2 (sum sqrt(VC))^2.  The plan must hit that bound up to the
        # +1-and-ceiling overhead, and no integer schedule near it may beat it.
        eps = 0.3
        V = {mi(0): 4.0, mi(1): 1.0, mi(2): 0.25}
        C = {mi(0): 1.0, mi(1): 4.0, mi(2): 16.0}
        plan = allocate_samples(V, C, eps)
        idx = sorted(V)
        v = np.array([V[a] for a in idx])
        c = np.array([C[a] for a in idx])
        lower = float(np.sum(np.sqrt(v * c))) ** 2 / eps**2
        n_star = np.array([plan[a] for a in idx], dtype=float)
        assert float(np.dot(n_star, c)) <= lower + 2.0 * float(np.sum(c))
        ranges = [range(max(1, int(n * 0.5)), int(n * 1.5) + 1) for n in n_star]
        for combo in itertools.product(*ranges):
            combo = np.array(combo, dtype=float)
            if float(np.sum(v / combo)) <= eps**2:
                assert float(np.dot(combo, c)) >= lower * (1.0 - 1e-12)


class TestKahan:
    def test_compensated_sum_beats_naive(self):
        values = [1e16, 1.0, -1e16, 1.0]
        assert kahan_sum(values) == 2.0

    def test_order_invariance_on_signed_decay(self):
        rng = np.random.default_rng(0)
        values = [((-1) ** k) * 2.0 ** (-k) * (1 + rng.random()) for k in range(60)]
        a = kahan_sum(values)
        b = kahan_sum(reversed(values))
        assert a == pytest.approx(b, rel=1e-15)
        assert a == pytest.approx(math.fsum(values), rel=1e-15)


class TestRatioEstimate:
    def test_single_index_collapses_to_self_normalized(self):
        model = Toy1DModel()
        iset = IndexSet("single", (mi(0),))
        plan = AllocationPlan.uniform(iset.members, 400)
        rep = mismc_ratio_estimate(model, iset, plan, SCHED, KERNEL, 21)
        # with one corner, psi_phi = qoi and psi_1 = 1, so the ratio is the
        # plain self-normalized particle mean
        sn = mismc_sn_estimate(model, iset, plan, SCHED, KERNEL, 21)
        assert rep.estimate == pytest.approx(sn.estimate, abs=1e-12)
        assert not rep.clamped

    def test_constant_likelihood_recovers_prior_mean(self):
        model = ConstantLikelihoodModel()
        iset = tensor_product_set((2,))
        plan = AllocationPlan.uniform(iset.members, 300)
        vals = [
            mismc_ratio_estimate(model, iset, plan, SCHED, KERNEL, 1000 + r).estimate
            for r in range(20)
        ]
        se = np.std(vals, ddof=1) / np.sqrt(len(vals))
        assert abs(np.mean(vals) - 1.0 / 3.0) <= 3 * se + 1e-3

    def test_clamp_branch(self):
        model = Toy1DModel()
        model.set_z_min(10.0)  # force the denominator clamp
        iset = IndexSet("single", (mi(0),))
        plan = AllocationPlan.uniform(iset.members, 100)
        rep = mismc_ratio_estimate(model, iset, plan, SCHED, KERNEL, 5)
        assert rep.clamped
        assert rep.estimate == pytest.approx(rep.numerator / 10.0, abs=1e-15)

    def test_deterministic_given_seed(self):
        model = Toy1DModel()
        iset = tensor_product_set((2,))
        plan = AllocationPlan.uniform(iset.members, 100)
        a = mismc_ratio_estimate(model, iset, plan, SCHED, KERNEL, 33)
        b = mismc_ratio_estimate(model, iset, plan, SCHED, KERNEL, 33)
        assert a.estimate == b.estimate
        assert a.total_cost == b.total_cost

    def test_cost_accounting(self):
        model = Toy1DModel()
        iset = tensor_product_set((1,))
        plan = AllocationPlan.uniform(iset.members, 50)
        rep = mismc_ratio_estimate(model, iset, plan, SCHED, KERNEL, 3)
        expected = sum(50 * SCHED.J * 6 * model.cost(a) for a in iset)
        assert rep.total_cost == expected

    def test_telescoping_with_exact_values(self):
        # substituting exact quadrature values for F_alpha^N makes the ratio
        # equal the top-corner posterior mean, exactly
        model = Toy1DModel()
        xs = np.linspace(-1.0, 1.0, 40_001)
        top = (3, 3)

        def f_exact(alpha, with_qoi):
            # single-axis surrogate: pretend axis 2 refines the quadrature grid
            ll = model.log_likelihood(mi(alpha[0]), xs[:, None])
            w = np.exp(ll)
            phi = xs**2 if with_qoi else np.ones_like(xs)
            return float(np.trapezoid(w * phi * (1 + 0.1 * alpha[1]), xs) / 2.0)

        iset = tensor_product_set(top)
        num = {a: f_exact(a, True) for a in iset.all_corners()}
        den = {a: f_exact(a, False) for a in iset.all_corners()}
        num_sum = sum(mixed_difference(num, a) for a in iset)
        den_sum = sum(mixed_difference(den, a) for a in iset)
        assert num_sum / den_sum == pytest.approx(num[mi(*top)] / den[mi(*top)], abs=1e-10)


class TestSelfNormalized:
    def test_zero_contribution_for_constant_likelihood(self):
        # identical corner likelihoods and corner-independent QoI cancel
        model = ConstantLikelihoodModel()
        iset = tensor_product_set((2,))
        plan = AllocationPlan.uniform(iset.members, 200)
        rep = mismc_sn_estimate(model, iset, plan, SCHED, KERNEL, 9)
        for r in rep.per_index:
            if r.alpha != mi(0):
                assert r.F_phi == pytest.approx(0.0, abs=1e-12)

    def test_sn_and_ratio_agree_within_errors(self):
        model = Toy1DModel()
        iset = tensor_product_set((3,))
        plan = AllocationPlan.uniform(iset.members, 300)
        sn = [mismc_sn_estimate(model, iset, plan, SCHED, KERNEL, 100 + r).estimate for r in range(15)]
        re = [
            mismc_ratio_estimate(model, iset, plan, SCHED, KERNEL, 100 + r).estimate
            for r in range(15)
        ]
        se = math.hypot(np.std(sn, ddof=1), np.std(re, ddof=1)) / np.sqrt(15)
        assert abs(np.mean(sn) - np.mean(re)) <= 3 * se + 1e-3


class TestSingleLevel:
    def test_constant_likelihood_prior_mean(self):
        model = ConstantLikelihoodModel()
        vals = [
            single_level_smc_estimate(model, mi(1), 500, SCHED, KERNEL, 40 + r)[0]
            for r in range(10)
        ]
        se = np.std(vals, ddof=1) / np.sqrt(10)
        assert abs(np.mean(vals) - 1.0 / 3.0) <= 3 * se + 2e-3

    def test_error_shrinks_with_n(self):
        model = Toy1DModel()
        xs = np.linspace(-1, 1, 100_001)
        w = np.exp(model.log_likelihood(mi(4), xs[:, None]))
        oracle = float(np.trapezoid(w * xs**2, xs) / np.trapezoid(w, xs))
        errs = {}
        for N in (250, 1000):
            sq = [
                (single_level_smc_estimate(model, mi(4), N, SCHED, KERNEL, 500 + r)[0] - oracle) ** 2
                for r in range(60)
            ]
            errs[N] = np.mean(sq)
        ratio = errs[250] / errs[1000]
        assert 2.0 <= ratio <= 8.0  # 1/N scaling with generous Monte Carlo slack


class TestPilotAndLevels:
    def test_pilot_outputs_positive(self):
        model = Toy1DModel()
        iset = tensor_product_set((2,))
        V, C = pilot_variances(model, iset, SCHED, KERNEL, 77, n_pilot=100)
        assert set(V) == set(C) == set(iset.members)
        assert all(v > 0 for v in V.values())
        assert all(c > 0 for c in C.values())
        # variance proxies decay with the index
        assert V[mi(2)] < V[mi(0)]

    def test_tp_levels(self):
        assert tp_levels_for_epsilon(0.01, (2.0, 2.0)) == (4, 4)
        assert tp_levels_for_epsilon(0.01, (1.0, 4.0)) == (8, 2)
        with pytest.raises(ValueError):
            tp_levels_for_epsilon(2.0, (2.0,))

    def test_td_level_monotone_in_eps(self):
        s = (2.0, 2.0)
        d = (0.5, 0.5)
        levels = [td_level_for_epsilon(e, s, d) for e in (0.1, 0.01, 0.001)]
        assert levels == sorted(levels)
        assert levels[0] >= 1

    def test_abort_propagates_failing_index(self):
        class Broken(ConstantLikelihoodModel):
            def log_likelihood(self, alpha, X):
                if tuple(alpha) == (2,):
                    return np.full(np.atleast_2d(X).shape[0], np.nan)
                return np.zeros(np.atleast_2d(X).shape[0])

        iset = tensor_product_set((2,))
        plan = AllocationPlan.uniform(iset.members, 50)
        with pytest.raises(SMCRunError, match=r"\(2,\)"):
            mismc_ratio_estimate(Broken(), iset, plan, SCHED, KERNEL, 4)
