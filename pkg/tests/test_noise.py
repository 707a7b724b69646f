import numpy as np
import pytest

from memfilter.core import RandomStream, make_grid
from memfilter.noise import (
    MemoryParams,
    diag_l,
    kernel_k,
    kernel_l,
    resolvent_residual,
    simulate_v,
    simulate_v_innovation,
    variance_ratio_u,
)


def random_params(rng, n):
    for _ in range(n):
        q = rng.uniform(0.05, 3.0)
        p = rng.uniform(-0.9 * q, 5.0)
        yield MemoryParams(p, q)


class TestMemoryParams:
    def test_domain_enforced(self):
        with pytest.raises(ValueError):
            MemoryParams(0.5, 0.0)
        with pytest.raises(ValueError):
            MemoryParams(0.5, -1.0)
        with pytest.raises(ValueError):
            MemoryParams(-0.4, 0.4)
        assert MemoryParams(-0.39, 0.4).r == pytest.approx(0.01)


class TestKernels:
    def test_hand_value_at_origin(self):
        par = MemoryParams(0.5, 0.3)
        assert kernel_k(par, 0.0, 0.0) == pytest.approx(0.34375, abs=1e-15)
        assert kernel_l(par, 0.0, 0.0) == pytest.approx(0.34375, abs=1e-15)
        assert diag_l(par, 0.0) == pytest.approx(0.34375, abs=1e-15)

    def test_brownian_case_vanishes(self):
        par = MemoryParams(0.0, 0.7)
        t = np.linspace(0, 5, 7)
        assert np.all(kernel_k(par, t, t * 0.5) == 0.0)
        assert np.all(kernel_l(par, t, t * 0.5) == 0.0)
        assert np.all(diag_l(par, t) == 0.0)

    def test_diagonal_identity_two_forms(self):
        # k(t,t) equals p - 2 p^2 q / ((2q+p)^2 e^{2qt} - p^2)
        rng = np.random.default_rng(11)
        for par in random_params(rng, 100):
            t = rng.uniform(0.0, 20.0)
            if 2 * par.q * t > 600:
                continue
            w = 2 * par.q + par.p
            alt = par.p - 2 * par.p**2 * par.q / (w * w * np.exp(2 * par.q * t) - par.p**2)
            assert kernel_k(par, t, t) == pytest.approx(alt, abs=1e-12, rel=1e-12)

    def test_exponential_factorization(self):
        rng = np.random.default_rng(12)
        for par in random_params(rng, 100):
            s = rng.uniform(0.0, 10.0)
            t = s + rng.uniform(0.0, 10.0)
            lhs = kernel_l(par, t, s)
            rhs = np.exp(-par.r * (t - s)) * diag_l(par, s)
            assert lhs == pytest.approx(rhs, abs=1e-12, rel=1e-12)

    def test_resolvent_closed_form_consistency(self):
        # l(t,s) equals k(t,s) exp(-int_s^t k(u,u) du): the two printed
        # routes to the innovation kernel agree
        from scipy.integrate import quad

        rng = np.random.default_rng(13)
        for par in list(random_params(rng, 10)):
            s = rng.uniform(0.0, 3.0)
            t = s + rng.uniform(0.0, 3.0)
            integral, _ = quad(lambda u: kernel_k(par, u, u), s, t, limit=200)
            alt = kernel_k(par, t, s) * np.exp(-integral)
            assert kernel_l(par, t, s) == pytest.approx(alt, rel=1e-9, abs=1e-12)

    def test_diag_l_long_time_limit(self):
        par = MemoryParams(0.5, 0.3)
        assert diag_l(par, 1e6) == pytest.approx(0.5, rel=1e-12)

    def test_overflow_guarded_far_times(self):
        par = MemoryParams(2.0, 1.5)
        val = diag_l(par, 1e5)  # e^{2qt} would overflow if taken literally
        assert np.isfinite(val) and val == pytest.approx(par.p)

    def test_rejects_s_greater_than_t(self):
        par = MemoryParams(0.5, 0.3)
        with pytest.raises(ValueError):
            kernel_k(par, 1.0, 2.0)
        with pytest.raises(ValueError):
            kernel_l(par, 1.0, 2.0)


class TestVarianceRatio:
    def test_brownian_is_unit(self):
        par = MemoryParams(0.0, 0.7)
        t = np.array([1e-6, 0.1, 3.3, 100.0])
        np.testing.assert_array_equal(variance_ratio_u(par, t), np.ones(4))

    def test_short_time_limit_is_one(self):
        rng = np.random.default_rng(14)
        for par in random_params(rng, 30):
            assert variance_ratio_u(par, 1e-11) == pytest.approx(1.0, abs=1e-8)

    def test_long_time_limit(self):
        par = MemoryParams(0.5, 0.3)
        assert variance_ratio_u(par, 1e9) == pytest.approx(0.140625, rel=1e-6)

    def test_monotone_by_sign_of_p(self):
        rng = np.random.default_rng(15)
        t = np.linspace(0.05, 20, 50)
        for par in random_params(rng, 40):
            if abs(par.p) < 1e-3:
                continue
            du = np.diff(variance_ratio_u(par, t))
            if par.p > 0:
                assert np.all(du < 0)
            else:
                assert np.all(du > 0)

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            variance_ratio_u(MemoryParams(0.5, 0.3), 0.0)


class TestSimulators:
    def test_brownian_degenerates_pathwise(self):
        g = make_grid(2, 0.01)
        par = MemoryParams(0.0, 1.0)
        a = simulate_v(par, g, RandomStream(3, 0))
        np.testing.assert_array_equal(a.v, a.driver)
        np.testing.assert_array_equal(a.memory_state, np.zeros(g.count + 1))
        b = simulate_v_innovation(par, g, RandomStream(3, 0))
        np.testing.assert_array_equal(b.v, b.driver)

    def test_paths_start_at_zero_and_align_with_grid(self):
        g = make_grid(1, 0.05)
        for sim in (simulate_v, simulate_v_innovation):
            path = sim(MemoryParams(0.5, 0.3), g, RandomStream(8, 1))
            assert path.v[0] == 0.0 and path.driver[0] == 0.0
            assert path.v.shape == (g.count + 1,)

    def test_state_scheme_matches_exact_ou_stepping(self):
        # the vectorized recursion must reproduce core.ou_exact_step exactly
        from memfilter.core import ou_exact_step

        g = make_grid(1, 0.1)
        par = MemoryParams(1.2, 0.4)
        path = simulate_v(par, g, RandomStream(21, 5))
        z = RandomStream(21, 5).normal(g.count + 1)  # first draw is xi(0)
        xi = path.memory_state[0]
        for i in range(g.count):
            xi = ou_exact_step(xi, par.r, par.p, g.step, z[i + 1])
            assert xi == pytest.approx(path.memory_state[i + 1], abs=1e-14)

    def test_increment_variance_against_exact_recursion(self):
        # deterministic covariance recursion for (V, xi): the scheme's
        # discrete variance converges to t*U(t) at first order in dt
        par = MemoryParams(0.5, 0.3)

        def discrete_variance(dt, t_target):
            n = int(round(t_target / dt))
            a = np.exp(-par.r * dt)
            c = par.p * np.sqrt(-np.expm1(-2 * par.r * dt) / (2 * par.r))
            A = np.array([[1.0, -dt], [0.0, a]])
            B = np.array([np.sqrt(dt), c])
            S = np.array([[0.0, 0.0], [0.0, par.p**2 / (2 * par.r)]])
            for _ in range(n):
                S = A @ S @ A.T + np.outer(B, B)
            return S[0, 0]

        target = 1.0 * variance_ratio_u(par, 1.0)
        errs = [abs(discrete_variance(dt, 1.0) - target) for dt in (0.02, 0.01, 0.005)]
        assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.4)
        assert errs[1] / errs[2] == pytest.approx(2.0, abs=0.4)

    def test_schemes_agree_and_match_variance_law(self):
        par = MemoryParams(0.5, 0.3)
        g = make_grid(2, 0.01)
        npaths = 10_000
        va = np.empty((npaths, 2))
        vb = np.empty((npaths, 2))
        idx = [10, 200]  # lags 0.1 and 2.0
        for n in range(npaths):
            va[n] = simulate_v(par, g, RandomStream(91, n)).v[idx]
            vb[n] = simulate_v_innovation(par, g, RandomStream(92, n)).v[idx]
        for col, lag in enumerate((0.1, 2.0)):
            u_true = variance_ratio_u(par, lag)
            se = u_true * np.sqrt(2.0 / (npaths - 1))
            est_a = va[:, col].var(ddof=1) / lag
            est_b = vb[:, col].var(ddof=1) / lag
            assert abs(est_a - u_true) < 3 * se
            assert abs(est_b - u_true) < 3 * se
            assert abs(est_a - est_b) < 3 * np.sqrt(2) * se

    def test_innovation_state_variance_ito_isometry(self):
        par = MemoryParams(0.5, 0.3)
        g = make_grid(2, 0.01)
        npaths = 10_000
        alpha_T = np.array([
            simulate_v_innovation(par, g, RandomStream(77, n)).memory_state[-1]
            for n in range(npaths)
        ])
        target = np.trapezoid(kernel_l(par, g.horizon, g.nodes) ** 2, dx=g.step)
        est = alpha_T.var(ddof=1)
        se = target * np.sqrt(2.0 / (npaths - 1))
        assert abs(est - target) < 3 * se


class TestResolventResidual:
    def test_brownian_exact_zero(self):
        res = resolvent_residual(MemoryParams(0.0, 1.0), make_grid(2, 0.01))
        assert res == (0.0, 0.0)

    def test_reference_magnitude(self):
        res = resolvent_residual(MemoryParams(0.5, 0.3), make_grid(5, 0.005))
        assert max(res) < 1e-4

    def test_second_order_in_dt(self):
        par = MemoryParams(0.5, 0.3)
        r1 = resolvent_residual(par, make_grid(2, 0.02))
        r2 = resolvent_residual(par, make_grid(2, 0.01))
        for a, b in zip(r1, r2):
            assert a / b == pytest.approx(4.0, abs=0.8)
