import numpy as np
import pytest
import scipy.linalg as sla

from memfilter.core import RandomStream, make_grid
from memfilter.filters import (
    SystemSpec,
    coeff_matrices,
    integrate_riccati,
    kalman_bucy,
    kalman_bucy_variance,
    run_filter,
)
from memfilter.noise import MemoryParams, simulate_v_innovation
from memfilter.volterra import (
    GammaTable,
    ObservationKernelSpec,
    build_gamma_for_system,
    run_filter_volterra,
    solve_error_table,
)

BROWNIAN = MemoryParams(0.0, 1.0)


def benchmark_spec(noise1, noise2, sigma=1.0, x0_var=0.0):
    return SystemSpec(theta=-2.0, sigma=sigma, mu=5.0, x0_mean=0.0, x0_var=x0_var,
                      noise1=noise1, noise2=noise2)


def noisy_path(grid, seed, scale=0.05):
    dy = scale * RandomStream(seed, 0).normal(grid.count)
    return np.concatenate([[0.0], np.cumsum(dy)])


class TestGammaTable:
    def test_deterministic_state_block(self):
        # sigma = 0: Gamma_XX(t,s) = Var(X0) e^{theta (t+s)}
        spec = benchmark_spec(MemoryParams(0.5, 0.3), BROWNIAN, sigma=0.0, x0_var=0.49)
        g = make_grid(1, 0.05)
        tab = build_gamma_for_system(spec, g).gamma
        nodes = g.nodes
        for i, j in [(5, 2), (20, 20), (13, 0)]:
            expect = 0.49 * np.exp(-2.0 * (nodes[i] + nodes[j]))
            assert tab[i, j, 0, 0] == pytest.approx(expect, rel=1e-12)

    def test_white_state_noise_closed_form(self):
        # p1 = 0, X0 = 0: Gamma_XX(t,s) = sigma^2 (e^{th(t+s)} - e^{th(t-s)})/(2 th)
        spec = benchmark_spec(BROWNIAN, MemoryParams(0.3, 0.5))
        g = make_grid(1, 0.002)
        tab = build_gamma_for_system(spec, g).gamma
        nodes = g.nodes
        th = spec.theta
        for i, j in [(400, 150), (500, 500), (320, 0)]:
            expect = (np.exp(th * (nodes[i] + nodes[j])) - np.exp(th * (nodes[i] - nodes[j]))) / (2 * th)
            assert tab[i, j, 0, 0] == pytest.approx(expect, rel=1e-5, abs=1e-9)

    def test_memory_state_variance_against_monte_carlo(self):
        par = MemoryParams(0.5, 0.3)
        spec = benchmark_spec(par, BROWNIAN)
        g = make_grid(2, 0.01)
        tab = build_gamma_for_system(spec, g).gamma
        npaths = 10_000
        alpha_T = np.array([
            simulate_v_innovation(par, g, RandomStream(55, n)).memory_state[-1]
            for n in range(npaths)
        ])
        target = tab[-1, -1, 1, 1]
        se = target * np.sqrt(2.0 / (npaths - 1))
        assert abs(alpha_T.var(ddof=1) - target) < 3 * se

    def test_invariants(self):
        spec = benchmark_spec(MemoryParams(5.2, 0.3), MemoryParams(-0.5, 0.6), x0_var=0.2)
        g = make_grid(1, 0.02)
        tab = build_gamma_for_system(spec, g).gamma
        idx = np.arange(g.count + 1)
        diag = tab[idx, idx]
        assert np.max(np.abs(diag - diag.transpose(0, 2, 1))) < 1e-12
        assert np.all(np.linalg.eigvalsh(diag)[:, 0] >= -1e-10)
        # independence of the observation-noise memory state from (X, alpha1)
        assert np.max(np.abs(tab[:, :, 0, 2])) == 0.0
        assert np.max(np.abs(tab[:, :, 2, 0])) == 0.0
        assert np.max(np.abs(tab[:, :, 1, 2])) == 0.0
        assert np.max(np.abs(tab[:, :, 2, 1])) == 0.0


class TestErrorTable:
    def test_zero_gamma_gives_zero_error(self):
        # nothing to estimate: no second moments and memoryless observation
        spec = benchmark_spec(MemoryParams(0.5, 0.3), BROWNIAN)
        g = make_grid(1, 0.05)
        zero = GammaTable(grid=g, gamma=np.zeros((g.count + 1, g.count + 1, 3, 3)))
        table = solve_error_table(zero, ObservationKernelSpec.for_system(spec), g)
        np.testing.assert_array_equal(table.p, np.zeros_like(table.p))

    def test_markov_case_matches_scalar_riccati(self):
        spec = benchmark_spec(BROWNIAN, BROWNIAN)
        g = make_grid(1, 0.001)
        obs = ObservationKernelSpec.for_system(spec)
        table = solve_error_table(build_gamma_for_system(spec, g), obs, g)
        gam = kalman_bucy_variance(spec.theta, spec.sigma, spec.mu, 0.0, g)
        idx = np.arange(g.count + 1)
        assert np.max(np.abs(table.p[idx, idx, 0, 0] - gam)) < 1e-3
        # off-diagonal two-time structure P(t,s) = e^{theta (t-s)} gamma(s)
        nodes = g.nodes
        for i, j in [(900, 300), (500, 499), (700, 0)]:
            expect = np.exp(spec.theta * (nodes[i] - nodes[j])) * gam[j]
            assert table.p[i, j, 0, 0] == pytest.approx(expect, abs=2e-3)

    def test_diagonal_symmetric_psd_and_dominated(self):
        spec = benchmark_spec(MemoryParams(5.2, 0.3), MemoryParams(-0.5, 0.6))
        g = make_grid(1, 0.005)
        gam = build_gamma_for_system(spec, g)
        table = solve_error_table(gam, ObservationKernelSpec.for_system(spec), g)
        idx = np.arange(g.count + 1)
        diag = table.p[idx, idx]
        assert np.max(np.abs(diag - diag.transpose(0, 2, 1))) == 0.0
        trace = np.trace(diag, axis1=1, axis2=2)
        assert np.all(np.linalg.eigvalsh(diag)[:, 0] >= -1e-8 * np.maximum(trace, 1e-12))
        # explained variance is nonnegative: trace(Gamma(t,t) - P(t,t)) >= 0
        gtrace = np.trace(gam.gamma[idx, idx], axis1=1, axis2=2)
        assert np.all(gtrace - trace >= -1e-10)

    def test_first_order_self_convergence(self):
        spec = benchmark_spec(MemoryParams(5.2, 0.3), MemoryParams(-0.5, 0.6))
        obs = ObservationKernelSpec.for_system(spec)

        def diag_of(dt):
            g = make_grid(1, dt)
            table = solve_error_table(build_gamma_for_system(spec, g), obs, g)
            idx = np.arange(g.count + 1)
            return table.p[idx, idx]

        d1, d2, d4 = diag_of(0.01), diag_of(0.005), diag_of(0.0025)
        gap12 = np.max(np.abs(d1 - d2[::2]))
        gap24 = np.max(np.abs(d2 - d4[::2]))
        assert gap12 / gap24 == pytest.approx(2.0, abs=0.5)

    def test_semigroup_factorization(self):
        # Q(t,s) = e^{-(t-s)F} Q(s) on the marched table
        spec = benchmark_spec(MemoryParams(5.2, 0.3), MemoryParams(-0.5, 0.6))
        g = make_grid(1, 0.005)
        obs = ObservationKernelSpec.for_system(spec)
        table = solve_error_table(build_gamma_for_system(spec, g), obs, g)
        nodes = g.nodes
        f = coeff_matrices(spec, 0.0).f
        rng = np.random.default_rng(2)
        for _ in range(12):
            j = int(rng.integers(1, g.count))
            i = int(rng.integers(j, g.count + 1))
            cm = coeff_matrices(spec, nodes[j])
            q_tj = table.p[i, j].copy()
            q_tj[2, 0] += float(obs.kernel(nodes[i], nodes[j])) / spec.mu
            q_j = table.p[j, j] + cm.d
            np.testing.assert_allclose(q_tj, sla.expm(-(nodes[i] - nodes[j]) * f) @ q_j,
                                       atol=1e-10)

    def test_grid_mismatch_rejected(self):
        spec = benchmark_spec(BROWNIAN, BROWNIAN)
        g = make_grid(1, 0.05)
        gam = build_gamma_for_system(spec, g)
        with pytest.raises(ValueError):
            solve_error_table(gam, ObservationKernelSpec.for_system(spec), make_grid(1, 0.02))


class TestVolterraFilter:
    def test_zero_inputs(self):
        spec = benchmark_spec(MemoryParams(0.5, 0.3), BROWNIAN)
        g = make_grid(1, 0.05)
        zero = GammaTable(grid=g, gamma=np.zeros((g.count + 1, g.count + 1, 3, 3)))
        obs = ObservationKernelSpec.for_system(spec)
        table = solve_error_table(zero, obs, g)
        zhat = run_filter_volterra(table, obs, np.zeros(g.count + 1), g)
        np.testing.assert_array_equal(zhat, np.zeros((g.count + 1, 3)))

    def test_markov_case_matches_kalman_bucy_pathwise(self):
        spec = benchmark_spec(BROWNIAN, BROWNIAN)
        g = make_grid(1, 0.001)
        obs = ObservationKernelSpec.for_system(spec)
        table = solve_error_table(build_gamma_for_system(spec, g), obs, g)
        y = noisy_path(g, 42, scale=0.03)
        zhat = run_filter_volterra(table, obs, y, g)
        xt, _ = kalman_bucy(spec.theta, spec.sigma, spec.mu, 0.0, 0.0, g, y)
        assert np.max(np.abs(zhat[:, 0] - xt)) < 1e-2

    def test_linear_in_observations(self):
        spec = benchmark_spec(MemoryParams(5.2, 0.3), MemoryParams(-0.5, 0.6))
        g = make_grid(1, 0.01)
        obs = ObservationKernelSpec.for_system(spec)
        table = solve_error_table(build_gamma_for_system(spec, g), obs, g)
        y1, y2 = noisy_path(g, 61), noisy_path(g, 62)
        za = run_filter_volterra(table, obs, y1, g)
        zb = run_filter_volterra(table, obs, y2, g)
        zc = run_filter_volterra(table, obs, 1.5 * y1 + 0.5 * y2, g)
        np.testing.assert_allclose(zc, 1.5 * za + 0.5 * zb, atol=1e-10)

    def test_agrees_with_ode_filter_on_memory_system(self):
        spec = benchmark_spec(MemoryParams(5.2, 0.3), MemoryParams(-0.5, 0.6))
        obs = ObservationKernelSpec.for_system(spec)

        def gap(dt, seed=7):
            g = make_grid(1, dt)
            table = solve_error_table(build_gamma_for_system(spec, g), obs, g)
            y = noisy_path(g, seed)
            zv = run_filter_volterra(table, obs, y, g)
            zo = run_filter(spec, g, y).zhat
            return np.max(np.abs(zv - zo))

        assert gap(0.01) < 5e-2
        assert gap(0.005) < 2.5e-2

    def test_riccati_diag_agreement(self):
        spec = benchmark_spec(MemoryParams(5.2, 0.3), MemoryParams(-0.5, 0.6))
        g = make_grid(1, 0.002)
        obs = ObservationKernelSpec.for_system(spec)
        table = solve_error_table(build_gamma_for_system(spec, g), obs, g)
        pr = integrate_riccati(spec, g)
        idx = np.arange(g.count + 1)
        gap = np.max(np.linalg.norm(table.p[idx, idx] - pr, axis=(1, 2)))
        assert gap < 5e-3
