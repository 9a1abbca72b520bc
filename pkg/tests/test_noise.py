"""Trajectory generation and spectral-density utilities."""

from __future__ import annotations

import csv
import math

import numpy as np
import pytest
import scipy.integrate

from gatesmith.model import OUCorrelation, QuasiStaticCorrelation, TwoPeakCorrelation
from gatesmith.noise import (
    STABILITY_LIMIT,
    NoiseTrajectory,
    SpectralDensity,
    cf_from_psd,
    empirical_cf,
    psd_cosine_transform,
    psd_ou,
    psd_twopeak,
    simulate_channel,
    simulate_channel_batch,
    simulate_ou,
    trajectory_seed,
    trajectory_to_csv,
)


class TestTrajectorySeed:
    def test_deterministic(self):
        a = trajectory_seed(42, 0, 7)
        b = trajectory_seed(42, 0, 7)
        assert a.generate_state(4).tolist() == b.generate_state(4).tolist()

    def test_distinct_across_axes(self):
        states = {
            tuple(trajectory_seed(42, c, r).generate_state(4))
            for c in range(3)
            for r in range(5)
        }
        assert len(states) == 15


class TestSimulateOU:
    def test_reproducible(self):
        a = simulate_ou(0.2, 0.5, 0.01, 100, seed=9)
        b = simulate_ou(0.2, 0.5, 0.01, 100, seed=9)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.values.shape == (101,)

    def test_seeds_differ(self):
        a = simulate_ou(0.2, 0.5, 0.01, 100, seed=9)
        b = simulate_ou(0.2, 0.5, 0.01, 100, seed=10)
        assert not np.array_equal(a.values, b.values)

    def test_quasi_static_path_is_constant(self):
        traj = simulate_ou(0.3, 0.0, 0.01, 50, seed=3)
        np.testing.assert_allclose(traj.values, traj.values[0])
        assert traj.values[0] != 0.0

    def test_zero_sigma_is_silent(self):
        traj = simulate_ou(0.0, 0.5, 0.01, 50, seed=3)
        np.testing.assert_array_equal(traj.values, 0.0)

    def test_stationary_variance(self):
        # discrete update has stationary variance sigma^2 / (1 - gamma dt / 2)
        sigma, gamma, dt = 0.5, 1.0, 0.01
        batch = simulate_channel_batch(
            OUCorrelation(sigma, gamma), dt, 400, 77, 0, np.arange(3000)
        )
        target = sigma**2 / (1 - gamma * dt / 2)
        got = float(np.mean(batch**2))
        # ~sqrt(2/N_eff) relative scatter; generous 4-sigma band
        assert got == pytest.approx(target, rel=0.1)

    def test_lag_correlation_decays(self):
        sigma, gamma, dt = 0.4, 2.0, 0.02
        trajs = [
            simulate_ou(sigma, gamma, dt, 500, seed=trajectory_seed(5, 0, r))
            for r in range(600)
        ]
        lag = int(round(1.0 / (gamma * dt)))  # one correlation time
        mean, stderr = empirical_cf(trajs, lag)
        expect = sigma**2 * math.exp(-gamma * lag * dt)
        assert abs(mean - expect) < 4 * stderr

    def test_stability_guard(self):
        with pytest.raises(ValueError, match="stability"):
            simulate_ou(0.1, 50.0, 0.01, 10, seed=1)
        assert STABILITY_LIMIT == pytest.approx(0.1)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            simulate_ou(-0.1, 0.5, 0.01, 10, seed=1)
        with pytest.raises(ValueError):
            simulate_ou(0.1, 0.5, 0.0, 10, seed=1)


class TestSimulateChannel:
    def test_dispatches_ou(self):
        spec = OUCorrelation(0.2, 0.5)
        a = simulate_channel(spec, 0.01, 50, seed=4)
        b = simulate_ou(0.2, 0.5, 0.01, 50, seed=4)
        np.testing.assert_array_equal(a.values, b.values)

    def test_dispatches_quasi_static(self):
        spec = QuasiStaticCorrelation(0.2)
        traj = simulate_channel(spec, 0.01, 50, seed=4)
        np.testing.assert_allclose(traj.values, traj.values[0])

    def test_rejects_spectral_only_specs(self):
        with pytest.raises(ValueError, match="no trajectory generator"):
            simulate_channel(TwoPeakCorrelation(0.1, 0.3), 0.01, 50, seed=4)

    def test_batch_matches_single(self):
        spec = OUCorrelation(0.3, 0.8)
        batch = simulate_channel_batch(spec, 0.02, 40, 99, 1, np.array([0, 3, 11]))
        assert batch.shape == (3, 41)
        for row, r in enumerate([0, 3, 11]):
            single = simulate_channel(spec, 0.02, 40, seed=trajectory_seed(99, 1, r))
            np.testing.assert_allclose(batch[row], single.values, atol=1e-15)

    def test_batch_channels_independent(self):
        spec = OUCorrelation(0.3, 0.8)
        a = simulate_channel_batch(spec, 0.02, 40, 99, 0, np.arange(4))
        b = simulate_channel_batch(spec, 0.02, 40, 99, 1, np.arange(4))
        assert not np.allclose(a, b)


class TestPsd:
    def test_ou_formula(self):
        w = np.array([0.0, 0.5, 2.0])
        got = psd_ou(0.2, 0.5, w)
        expect = 2 * 0.04 * 0.5 / (0.25 + w**2)
        np.testing.assert_allclose(got, expect, rtol=1e-14)

    def test_ou_rejects_gamma_zero(self):
        with pytest.raises(ValueError, match="quasi-static"):
            psd_ou(0.2, 0.0, np.array([1.0]))

    def test_twopeak_peaks(self):
        gamma = 0.3
        w = np.linspace(0.0, 4.0, 4001)
        s = psd_twopeak(0.1, gamma, w)
        assert np.all(s >= 0.0)
        assert np.argmax(s) == 0
        upper = np.linspace(1.0, 3.0, 2001)
        ipeak = np.argmax(psd_twopeak(0.1, gamma, upper))
        assert upper[ipeak] == pytest.approx(5 * gamma, abs=0.01)

    def test_twopeak_total_power(self):
        # C(0) = 2 sigma^2 fixes the area (1/pi) Int_0^inf S dw
        sigma, gamma = 0.2, 0.4
        val, _ = scipy.integrate.quad(
            lambda w: psd_twopeak(sigma, gamma, np.array([w]))[0], 0.0, np.inf, limit=200
        )
        assert val / math.pi == pytest.approx(2 * sigma**2, rel=1e-8)


class TestCosineTransform:
    def test_ou_roundtrip(self):
        sigma, gamma = 0.2, 0.7
        for tau in (0.0, 0.5, 3.0):
            got = psd_cosine_transform(
                lambda w: psd_ou(sigma, gamma, w), tau, scale=gamma
            )
            expect = sigma**2 * math.exp(-gamma * tau)
            assert got == pytest.approx(expect, rel=1e-8)

    def test_cf_from_psd_trapezoid(self):
        sigma, gamma = 0.3, 1.0
        omega = np.linspace(0.0, 2000.0, 200_001)
        sd = SpectralDensity(omega, psd_ou(sigma, gamma, omega))
        got = cf_from_psd(sd, 0.0)
        assert got == pytest.approx(sigma**2, rel=1e-3)

    def test_cf_from_psd_warns_on_heavy_tail(self):
        omega = np.linspace(0.0, 2.0, 101)
        sd = SpectralDensity(omega, psd_ou(0.3, 1.0, omega))
        with pytest.warns(UserWarning, match="too narrow"):
            cf_from_psd(sd, 0.0)


class TestSpectralDensity:
    def test_area(self):
        sd = SpectralDensity(np.array([0.0, 1.0, 2.0]), np.array([1.0, 1.0, 1.0]))
        assert sd.area() == pytest.approx(2.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            SpectralDensity(np.array([0.0, 1.0]), np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            SpectralDensity(np.array([1.0, 0.5]), np.array([1.0, 1.0]))

    def test_tail_fraction_orders_grids(self):
        sigma, gamma = 0.2, 1.0
        short = np.linspace(0.0, 10.0, 1001)
        long = np.linspace(0.0, 1000.0, 10001)
        f_short = SpectralDensity(short, psd_ou(sigma, gamma, short)).tail_fraction()
        f_long = SpectralDensity(long, psd_ou(sigma, gamma, long)).tail_fraction()
        assert f_long < f_short


class TestEmpiricalCf:
    def test_zero_lag_of_constant_paths(self):
        trajs = [
            NoiseTrajectory(np.full(10, v), 0.1, seed=0, label="Z")
            for v in (0.5, -0.5, 1.0, -1.0)
        ]
        mean, stderr = empirical_cf(trajs, 0)
        assert mean == pytest.approx((0.25 + 0.25 + 1.0 + 1.0) / 4)
        assert stderr > 0.0

    def test_single_trajectory_has_infinite_stderr(self):
        traj = NoiseTrajectory(np.ones(10), 0.1, seed=0, label="Z")
        mean, stderr = empirical_cf([traj], 3)
        assert mean == pytest.approx(1.0)
        assert math.isinf(stderr)

    def test_lag_bounds(self):
        traj = NoiseTrajectory(np.ones(10), 0.1, seed=0, label="Z")
        with pytest.raises(ValueError, match="lag"):
            empirical_cf([traj], 10)
        with pytest.raises(ValueError):
            empirical_cf([], 0)


class TestCsvExport:
    def test_roundtrip(self, tmp_path):
        traj = simulate_ou(0.2, 0.5, 0.01, 20, seed=5, label="Z")
        path = tmp_path / "traj.csv"
        trajectory_to_csv(traj, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "beta"]
        assert len(rows) == 22
        ts = np.array([float(r[0]) for r in rows[1:]])
        betas = np.array([float(r[1]) for r in rows[1:]])
        np.testing.assert_allclose(ts, traj.times, atol=1e-12)
        np.testing.assert_allclose(betas, traj.values, atol=1e-12)
