import numpy as np
import pytest

from memfilter.core import RandomStream, make_grid, ou_exact_step


class TestGrid:
    def test_benchmark_grid(self):
        g = make_grid(10, 0.01)
        assert g.count == 1000
        assert g.nodes.shape == (1001,)

    def test_smallest_grid(self):
        g = make_grid(1, 0.5)
        assert g.count == 2
        np.testing.assert_allclose(g.nodes, [0.0, 0.5, 1.0])

    def test_non_commensurate_rejected(self):
        with pytest.raises(ValueError):
            make_grid(10, 0.3)

    @pytest.mark.parametrize("T,dt", [(0, 0.1), (-1, 0.1), (1, 0), (1, -0.1), (1, 0.9)])
    def test_invalid_inputs_rejected(self, T, dt):
        with pytest.raises(ValueError):
            make_grid(T, dt)

    def test_nodes_equally_spaced_increasing(self):
        g = make_grid(3, 0.125)
        d = np.diff(g.nodes)
        assert np.all(d > 0)
        np.testing.assert_allclose(d, g.step, rtol=0, atol=1e-15)
        assert abs(g.nodes[-1] - g.horizon) <= 1e-9 * g.horizon


class TestRandomStream:
    def test_replay_is_bitwise(self):
        a = RandomStream(1234, 7).normal(100)
        b = RandomStream(1234, 7).normal(100)
        np.testing.assert_array_equal(a, b)

    def test_distinct_ids_differ(self):
        a = RandomStream(1234, 0).normal(100)
        b = RandomStream(1234, 1).normal(100)
        assert np.max(np.abs(a - b)) > 1e-3

    def test_sequential_draws_continue_the_stream(self):
        s = RandomStream(5, 0)
        first = s.normal(10)
        second = s.normal(10)
        both = RandomStream(5, 0).normal(20)
        np.testing.assert_array_equal(np.concatenate([first, second]), both)

    def test_spawn_uses_new_id(self):
        s = RandomStream(9, 0)
        t = s.spawn(3)
        np.testing.assert_array_equal(t.normal(5), RandomStream(9, 3).normal(5))


class TestOuExactStep:
    def test_zero_state_zero_noise(self):
        assert ou_exact_step(0.0, 1.0, 0.0, 1.0, 12.3) == 0.0

    def test_pure_decay(self):
        got = ou_exact_step(1.0, 1.0, 0.0, 1.0, 0.0)
        assert got == pytest.approx(np.exp(-1.0), abs=1e-15)

    def test_transition_variance_monte_carlo(self):
        # Var of one step from 0 with rate 2, vol 1, dt 0.5 is (1-e^{-2})/4
        z = RandomStream(2024, 0).normal(100_000)
        out = ou_exact_step(0.0, 2.0, 1.0, 0.5, z)
        target = (1.0 - np.exp(-2.0)) / 4.0
        se = target * np.sqrt(2.0 / (z.size - 1))
        assert abs(out.var(ddof=1) - target) < 3 * se

    def test_rejects_bad_rate_or_dt(self):
        with pytest.raises(ValueError):
            ou_exact_step(0.0, 0.0, 1.0, 0.1, 0.0)
        with pytest.raises(ValueError):
            ou_exact_step(0.0, -1.0, 1.0, 0.1, 0.0)
        with pytest.raises(ValueError):
            ou_exact_step(0.0, 1.0, 1.0, 0.0, 0.0)

    @pytest.mark.parametrize("rate,vol,dt,n", [(1.0, 1.0, 0.1, 7), (2.5, 0.3, 0.05, 20)])
    def test_iterated_steps_match_one_big_step_in_law(self, rate, vol, dt, n):
        # mean factor and variance compose exactly across sub-steps
        decay = np.exp(-rate * dt)
        var1 = vol**2 * (1 - decay**2) / (2 * rate)
        mean_factor, var = 1.0, 0.0
        for _ in range(n):
            var = decay**2 * var + var1
            mean_factor *= decay
        big_decay = np.exp(-rate * n * dt)
        big_var = vol**2 * (1 - big_decay**2) / (2 * rate)
        assert mean_factor == pytest.approx(big_decay, rel=1e-12)
        assert var == pytest.approx(big_var, rel=1e-12)
