import numpy as np
import pytest

from pgupdate.errors import DataError
from pgupdate.esmda import (
    AssimilationProblem,
    MdaSchedule,
    assimilate_once,
    gaspari_cohn,
    kalman_gain,
    mda_update,
)


class TestGaspariCohn:
    def test_origin_is_one(self):
        assert gaspari_cohn(0.0, 10.0) == 1.0

    def test_zero_beyond_twice_radius(self):
        assert gaspari_cohn(20.0, 10.0) == 0.0
        assert gaspari_cohn(50.0, 10.0) == 0.0

    def test_value_at_radius(self):
        # canonical quintic at r=1: -1/4 + 1/2 + 5/8 - 5/3 + 1 = 5/24
        assert gaspari_cohn(1.0, 1.0) == pytest.approx(5.0 / 24.0, abs=1e-12)
        assert gaspari_cohn(1.0, 1.0) == pytest.approx(0.2083333, abs=1e-6)

    def test_continuity_at_branch_point(self):
        eps = 1e-8
        left = gaspari_cohn(1.0 - eps, 1.0)
        right = gaspari_cohn(1.0 + eps, 1.0)
        assert abs(left - right) < 1e-6

    def test_bounded_and_monotone(self):
        r = np.linspace(0.0, 3.0, 10_000)
        v = gaspari_cohn(r, 1.0)
        assert np.all(v >= 0.0) and np.all(v <= 1.0)
        assert np.all(np.diff(v) <= 1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(DataError):
            gaspari_cohn(1.0, 0.0)
        with pytest.raises(DataError):
            gaspari_cohn(-1.0, 1.0)


class TestSchedule:
    def test_constant_satisfies_sum(self):
        s = MdaSchedule.constant(4)
        assert s.alphas == (4.0, 4.0, 4.0, 4.0)
        assert sum(1 / a for a in s.alphas) == pytest.approx(1.0)

    def test_rejects_bad_coefficients(self):
        with pytest.raises(DataError):
            MdaSchedule((2.0, 2.0, 2.0))
        with pytest.raises(DataError):
            MdaSchedule(())
        with pytest.raises(DataError):
            MdaSchedule((-1.0, 0.5))

    def test_custom_valid_schedule(self):
        s = MdaSchedule((2.0, 4.0, 4.0))
        assert s.n_assimilations == 3


def _scalar_problem(n_real, mu0, sd0, obs, obs_sd, seed):
    rng = np.random.default_rng(seed)
    state = mu0 + sd0 * rng.standard_normal((n_real, 1))
    return AssimilationProblem(
        state=state,
        observations=np.array([obs]),
        obs_error_sd=np.array([obs_sd]),
    )


class TestGain:
    def test_zero_cross_covariance_gives_zero_gain(self):
        rng = np.random.default_rng(0)
        p = AssimilationProblem(
            state=rng.standard_normal((200, 3)),
            observations=np.zeros(2),
            obs_error_sd=np.ones(2),
            predictions=np.tile(rng.standard_normal(2), (200, 1)),
        )
        gain = kalman_gain(p, 1.0)
        assert np.allclose(gain, 0.0)

    def test_scalar_gain_formula(self):
        p = _scalar_problem(20_000, 0.0, 2.0, 1.0, 0.5, seed=1)
        p.predictions = p.state.copy()
        alpha = 3.0
        gain = kalman_gain(p, alpha)
        var_e = np.var(p.state[:, 0], ddof=1)
        expected = var_e / (var_e + alpha * 0.25)
        assert gain[0, 0] == pytest.approx(expected, rel=1e-6)

    def test_localization_support_exact_zero(self):
        rng = np.random.default_rng(3)
        n_real = 50
        state_locs = np.array([[0.0, 0.0, 0.0], [100.0, 0.0, 0.0]])
        obs_locs = np.array([[0.0, 0.0, 0.0]])
        state = rng.standard_normal((n_real, 2))
        p = AssimilationProblem(
            state=state,
            observations=np.array([0.2]),
            obs_error_sd=np.array([0.1]),
            predictions=state[:, :1] + 0.1 * rng.standard_normal((n_real, 1)),
            state_locations=state_locs,
            obs_locations=obs_locs,
            localization_radius=10.0,
        )
        gain = kalman_gain(p, 1.0)
        assert gain[1, 0] == 0.0
        assert gain[0, 0] != 0.0


class TestAssimilateOnce:
    def test_zero_gain_is_identity(self):
        rng = np.random.default_rng(4)
        state = rng.standard_normal((30, 5))
        p = AssimilationProblem(
            state=state, observations=np.zeros(2), obs_error_sd=np.ones(2),
            predictions=rng.standard_normal((30, 2)),
        )
        out = assimilate_once(p, np.zeros((5, 2)), np.zeros((30, 2)))
        assert np.array_equal(out, state)

    def test_perfect_prediction_is_identity(self):
        rng = np.random.default_rng(5)
        state = rng.standard_normal((30, 5))
        perturbed = rng.standard_normal((30, 2))
        p = AssimilationProblem(
            state=state, observations=np.zeros(2), obs_error_sd=np.ones(2),
            predictions=perturbed.copy(),
        )
        out = assimilate_once(p, rng.standard_normal((5, 2)), perturbed)
        assert np.allclose(out, state)

    def test_scalar_posterior_mean(self):
        # analytic 1D Kalman oracle
        mu0, sd0, y, sd_obs = 0.5, 2.0, 3.0, 1.0
        p = _scalar_problem(10_000, mu0, sd0, y, sd_obs, seed=6)
        p.predictions = p.state.copy()
        gain = kalman_gain(p, 1.0)
        rng = np.random.default_rng(7)
        perturbed = y + sd_obs * rng.standard_normal((10_000, 1))
        out = assimilate_once(p, gain, perturbed)
        var0 = np.var(p.state[:, 0], ddof=1)
        k_true = var0 / (var0 + 1.0)
        post_mean = np.mean(p.state[:, 0]) + k_true * (y - np.mean(p.state[:, 0]))
        se = np.std(out[:, 0]) / np.sqrt(10_000)
        assert abs(np.mean(out[:, 0]) - post_mean) < 3 * se + 1e-3


class TestMdaUpdate:
    def test_single_cycle_equals_manual_smoother(self):
        p = _scalar_problem(500, 0.0, 1.5, 1.2, 0.4, seed=8)
        state0 = p.state.copy()
        seed = 42
        out = mda_update(p, MdaSchedule((1.0,)), forward=lambda s: s, seed=seed)

        # manual single-step smoother with the same stream
        q = AssimilationProblem(
            state=state0.copy(), observations=np.array([1.2]),
            obs_error_sd=np.array([0.4]), predictions=state0.copy(),
        )
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((500, 1))
        perturbed = 1.2 + 1.0 * 0.4 * noise
        gain = kalman_gain(q, 1.0)
        manual = assimilate_once(q, gain, perturbed)
        assert np.array_equal(out, manual)

    def test_linear_gaussian_oracle_na4(self):
        mu0, sd0, y, sd_obs = 0.0, 1.0, 2.0, 1.0
        n = 10_000
        p = _scalar_problem(n, mu0, sd0, y, sd_obs, seed=9)
        mu_e = float(np.mean(p.state))
        var_e = float(np.var(p.state, ddof=1))
        post_var = 1.0 / (1.0 / var_e + 1.0 / sd_obs**2)
        post_mean = post_var * (mu_e / var_e + y / sd_obs**2)
        out = mda_update(p, MdaSchedule.constant(4), forward=lambda s: s, seed=10)
        assert np.mean(out) == pytest.approx(post_mean, rel=0.05, abs=0.05)
        assert np.var(out, ddof=1) == pytest.approx(post_var, rel=0.05)

    def test_zero_variance_ensemble_unchanged(self):
        state = np.full((50, 4), 1.25)
        p = AssimilationProblem(
            state=state.copy(), observations=np.array([9.0]),
            obs_error_sd=np.array([0.1]),
        )
        out = mda_update(p, MdaSchedule.constant(2), forward=lambda s: s[:, :1], seed=11)
        assert np.array_equal(out, state)

    def test_deterministic_given_seed(self):
        p1 = _scalar_problem(200, 0.0, 1.0, 1.0, 0.3, seed=12)
        p2 = _scalar_problem(200, 0.0, 1.0, 1.0, 0.3, seed=12)
        o1 = mda_update(p1, MdaSchedule.constant(3), forward=lambda s: s, seed=13)
        o2 = mda_update(p2, MdaSchedule.constant(3), forward=lambda s: s, seed=13)
        assert np.array_equal(o1, o2)

    def test_mse_decreases_on_informative_problem(self):
        p = _scalar_problem(2000, 0.0, 2.0, 1.5, 0.2, seed=14)
        before = float(np.mean((np.mean(p.state) - 1.5) ** 2))
        out = mda_update(p, MdaSchedule.constant(4), forward=lambda s: s, seed=15)
        after = float(np.mean((np.mean(out) - 1.5) ** 2))
        assert after < before
