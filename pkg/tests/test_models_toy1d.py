import numpy as np
import pytest

from mismc import rng as rngmod
from mismc.models import Toy1DModel
from mismc.models.toy1d import (
    OBS_POINTS,
    exact_solution,
    fem1d_solve,
    generate_observations,
    interpolate_nodal,
)
from mismc.multiindex import mi


class TestFEM1D:
    @pytest.mark.parametrize("level", [0, 1, 3, 5])
    @pytest.mark.parametrize("x", [-0.7, 0.0, 0.2581, 1.0])
    def test_nodally_exact(self, level, x):
        # linear elements with the exact load reproduce the quadratic
        # solution exactly at the mesh nodes
        nodal = fem1d_solve(x, level)
        grid = np.linspace(0.0, 1.0, nodal.shape[0])
        assert np.allclose(nodal, exact_solution(x, grid), atol=1e-13)

    def test_boundary_conditions(self):
        nodal = fem1d_solve(0.5, 2)
        assert nodal[0] == 0.0 and nodal[-1] == 0.0

    def test_negative_level_rejected(self):
        with pytest.raises(ValueError):
            fem1d_solve(0.5, -1)

    def test_linearity_in_forcing(self):
        a = fem1d_solve(1.0, 3)
        b = fem1d_solve(-0.35, 3)
        assert np.allclose(b, -0.35 * a, atol=1e-14)

    def test_observation_error_rate_is_minus_two(self):
        # piecewise-linear interpolation error at off-node points is O(h^2):
        # slope -2 in log2 per level against the closed-form solution
        x = 0.2581
        errs = []
        for level in range(1, 8):
            pred = interpolate_nodal(fem1d_solve(x, level), OBS_POINTS)
            errs.append(np.sqrt(np.mean((pred - exact_solution(x, OBS_POINTS)) ** 2)))
        slope = np.polyfit(np.arange(1, 8), np.log2(errs), 1)[0]
        assert slope == pytest.approx(-2.0, abs=0.1)


class TestToy1DModel:
    def test_observation_generation_deterministic(self):
        assert np.array_equal(generate_observations(), generate_observations())
        assert not np.array_equal(generate_observations(seed=1), generate_observations(seed=2))

    def test_likelihood_linear_factor_matches_direct_solve(self):
        model = Toy1DModel()
        X = np.array([[0.3], [-0.8]])
        direct = np.stack(
            [interpolate_nodal(fem1d_solve(float(x), 4), OBS_POINTS) for x in X[:, 0]]
        )
        assert np.allclose(model.predicted(mi(4), X), direct, atol=1e-13)

    def test_likelihood_converges_to_exact(self):
        model = Toy1DModel()
        X = np.array([[0.2], [0.9]])
        fine = model.log_likelihood(mi(10), X)
        assert np.allclose(fine, model.exact_log_likelihood(X), atol=1e-6)

    def test_prior_support_and_qoi(self):
        model = Toy1DModel()
        X = model.prior_sample(mi(0), rngmod.stream(1, 1), 1000)
        assert np.all(np.abs(X) <= 1.0)
        assert np.allclose(model.qoi(mi(0), X), X[:, 0] ** 2)
        assert np.all(np.isfinite(model.prior_log_density(mi(0), X)))
        assert model.prior_log_density(mi(0), np.array([[1.5]]))[0] == -np.inf

    def test_cost_doubles_per_level(self):
        model = Toy1DModel()
        assert model.cost(mi(3)) == 2 * model.cost(mi(2))

    def test_z_min_positive_and_cached(self):
        model = Toy1DModel()
        z1 = model.z_min()
        assert z1 > 0.0
        assert model.z_min() == z1
        model.set_z_min(0.123)
        assert model.z_min() == 0.123
