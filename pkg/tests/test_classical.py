import numpy as np
import pytest

import spinfid as sf
from spinfid.classical import lag_average
from spinfid.errors import ConfigError, NumericalError
from spinfid.streams import stream


def chain(n, jx=-0.41, jy=-0.41, jz=0.82):
    return sf.build_nearest_neighbor(sf.LatticeSpec((n,)), jx, jy, jz)


class TestSampling:
    def test_uniform_sphere_moments(self):
        n = 100_000
        s = sf.sample_random_state(n, stream(1, 0))
        assert np.allclose(np.linalg.norm(s, axis=1), 1.0, atol=1e-12)
        # component means ~ N(0, 1/(3n)); second moments ~ 1/3 +- 4 sigma
        sig_mean = np.sqrt(1.0 / 3.0 / n)
        assert np.abs(s.mean(axis=0)).max() < 4 * sig_mean
        sig_sq = np.sqrt((1.0 / 5.0 - 1.0 / 9.0) / n)
        assert np.abs((s**2).mean(axis=0) - 1.0 / 3.0).max() < 4 * sig_sq

    def test_fixed_seed_reproducible(self):
        a = sf.sample_random_state(50, stream(9, 3))
        b = sf.sample_random_state(50, stream(9, 3))
        assert np.array_equal(a, b)

    def test_distinct_streams_uncorrelated(self):
        n = 100_000
        a = sf.sample_random_state(n, stream(5, 0))
        b = sf.sample_random_state(n, stream(5, 1))
        cross = (a * b).mean(axis=0)
        assert np.abs(cross).max() < 4 * np.sqrt(1.0 / 9.0 / n)


class TestLocalFieldAndEnergy:
    def test_isolated_pair_field(self):
        t = chain(2, 0.3, -0.2, 0.9)
        state = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert np.allclose(sf.local_field(state, t, 0), [0.0, 0.0, 0.9])

    def test_zero_couplings(self):
        t = chain(4, 0.0, 0.0, 0.0)
        state = sf.sample_random_state(4, stream(0, 0))
        assert np.allclose(sf.local_field(state, t, 2), 0.0)
        assert sf.energy(state, t) == 0.0

    def test_field_matches_naive_loop(self):
        t = chain(12)
        state = sf.sample_random_state(12, stream(2, 0))
        for m in (0, 5, 11):
            h = np.zeros(3)
            for n in range(12):
                if n == m:
                    continue
                j = t.coupling(m, n)
                h += j * state[n]
            assert np.abs(sf.local_field(state, t, m) - h).max() < 1e-14

    def test_aligned_pair_energy(self):
        t = chain(2, 0.0, 0.0, 0.7)
        state = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        assert sf.energy(state, t) == pytest.approx(0.7, rel=1e-15)

    def test_energy_matches_double_loop(self):
        t = sf.build_nearest_neighbor(sf.LatticeSpec((5, 5)), 0.0, -1.0, 1.0)
        state = sf.sample_random_state(25, stream(3, 0))
        e = 0.0
        for m in range(25):
            for n in range(m + 1, 25):
                e += float(np.dot(t.coupling(m, n), state[m] * state[n]))
        assert abs(sf.energy(state, t) - e) < 1e-13


class TestStep:
    def test_precession_about_frozen_partner(self):
        # Ising pair with the partner pinned along z: S1 precesses at J
        j = 0.7
        t = chain(2, 0.0, 0.0, j)
        dt, n_steps = 0.1, 100
        state = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        for _ in range(n_steps):
            state = sf.gauss_step(state, t, dt)
        assert np.abs(state[1] - [0.0, 0.0, 1.0]).max() < 1e-12
        # dS/dt = S x h rotates x toward -y for h along +z
        angle = np.arctan2(state[0, 1], state[0, 0]) % (2 * np.pi)
        expected = (-j * dt * n_steps) % (2 * np.pi)
        assert abs(angle - expected) < 1e-5  # O(dt^4) phase accuracy
        assert abs(np.linalg.norm(state[0]) - 1.0) < 1e-12
        assert abs(state[0, 2]) < 1e-15

    def test_ising_conserves_z_projections(self):
        t = chain(2, 0.0, 0.0, 1.3)
        state = sf.sample_random_state(2, stream(4, 0))
        z0 = state[:, 2].copy()
        for _ in range(200):
            state = sf.gauss_step(state, t, 0.05)
        assert np.abs(state[:, 2] - z0).max() < 1e-12

    def test_energy_conservation_long_run(self):
        # 4000 steps at dt = 0.05 over the chain couplings
        t = chain(12)
        state = sf.sample_random_state(12, stream(6, 0))
        e0 = sf.energy(state, t)
        for _ in range(4000):
            state = sf.gauss_step(state, t, 0.05, tol=1e-10)
        drift = abs(sf.energy(state, t) - e0) / abs(e0)
        assert drift < 1e-6
        assert np.abs(np.linalg.norm(state, axis=1) - 1.0).max() < 1e-7

    def test_mz_conserved_when_xy_symmetric(self):
        t = chain(8, -0.41, -0.41, 0.82)
        state = sf.sample_random_state(8, stream(7, 0))
        mz0 = state[:, 2].sum()
        for _ in range(1000):
            state = sf.gauss_step(state, t, 0.05)
        assert abs(state[:, 2].sum() - mz0) < 1e-8 * 8

    def test_mz_not_conserved_for_anisotropic_xy(self):
        t = chain(8, 0.0, -1.0, 1.0)
        state = sf.sample_random_state(8, stream(7, 0))
        mz0 = state[:, 2].sum()
        for _ in range(1000):
            state = sf.gauss_step(state, t, 0.05)
        assert abs(state[:, 2].sum() - mz0) > 1e-3


class TestLagAverage:
    def test_matches_direct_sliding_window(self):
        rng = np.random.default_rng(0)
        mx = rng.normal(size=(40, 3))
        got = lag_average(mx, 20)
        for k in range(21):
            direct = (mx[:40 - k] * mx[k:]).sum(axis=0) / (40 - k)
            assert np.abs(got[k] - direct).max() < 1e-12

    def test_symmetric_under_trajectory_reversal(self):
        rng = np.random.default_rng(1)
        mx = rng.normal(size=(64, 2))
        a = lag_average(mx, 30)
        b = lag_average(mx[::-1].copy(), 30)
        assert np.abs(a - b).max() < 1e-12


class TestClassicalCorrelation:
    def test_zero_couplings_all_ones(self):
        t = chain(2, 0.0, 0.0, 0.0)
        p = sf.IntegrationParams(dt=0.1, duration=10.0, n_realizations=3, seed=1)
        c = sf.classical_correlation(t, p)
        assert np.abs(c.values - 1.0).max() < 1e-12

    def test_deterministic_rerun(self):
        t = chain(6)
        p = sf.IntegrationParams(dt=0.05, duration=20.0, n_realizations=16, seed=11,
                                 t_max=10.0, batch_size=5)
        a = sf.classical_correlation(t, p)
        b = sf.classical_correlation(t, p)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.stderr, b.stderr)

    def test_batch_split_invariant(self):
        t = chain(6)
        base = dict(dt=0.05, duration=20.0, n_realizations=16, seed=11, t_max=10.0)
        a = sf.classical_correlation(t, sf.IntegrationParams(batch_size=16, **base))
        b = sf.classical_correlation(t, sf.IntegrationParams(batch_size=3, **base))
        assert np.allclose(a.values, b.values, atol=1e-12)

    def test_workers_do_not_change_result(self):
        t = chain(6)
        base = dict(dt=0.05, duration=20.0, n_realizations=12, seed=2, t_max=10.0,
                    batch_size=4)
        a = sf.classical_correlation(t, sf.IntegrationParams(workers=1, **base))
        b = sf.classical_correlation(t, sf.IntegrationParams(workers=2, **base))
        assert np.array_equal(a.values, b.values)

    def test_raw_c0_near_n_over_3(self):
        t = chain(12)
        p = sf.IntegrationParams(dt=0.05, duration=40.0, n_realizations=256, seed=5,
                                 t_max=5.0)
        c = sf.classical_correlation(t, p)
        se0 = c.stderr[0] * c.normalization
        assert abs(c.raw[0] - 4.0) < 5 * se0
        assert c.values[0] == 1.0

    def test_t_max_beyond_half_duration_rejected(self):
        with pytest.raises(ConfigError):
            sf.IntegrationParams(dt=0.05, duration=10.0, n_realizations=2, t_max=6.0)

    def test_quantum_table_rejected(self):
        q = sf.build_nearest_neighbor(sf.LatticeSpec((4,)), 1.0, 1.0, 1.0, two_s=1)
        p = sf.IntegrationParams(dt=0.1, duration=5.0, n_realizations=2)
        with pytest.raises(ConfigError):
            sf.classical_correlation(q, p)

    def test_drift_meta_reported(self):
        t = chain(8)
        p = sf.IntegrationParams(dt=0.05, duration=50.0, n_realizations=8, seed=0,
                                 t_max=10.0)
        c = sf.classical_correlation(t, p)
        assert float(c.meta["max_energy_drift_rel"]) < 1e-6
        assert float(c.meta["max_norm_drift"]) < 1e-7
        assert c.group_values.shape[1] == len(c.times)
