"""Propagation against closed forms and order-by-order Dyson consistency.

Several cases run deliberately coarse grids (the commuting closed forms are
exact at any step size), so the under-resolution warning is silenced here
and asserted once in TestStepResolutionWarning.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

pytestmark = pytest.mark.filterwarnings(
    "ignore:dt \\* max:UserWarning"
)

from gatesmith.model import PulseAnsatz, named_gate, single_qubit_model
from gatesmith.noise import NoiseTrajectory, simulate_ou
from gatesmith.operators import PAULI_X, PAULI_Z, dagger, expm_hermitian, unitarity_defect
from gatesmith.propagate import (
    DysonTerms,
    TimeGrid,
    dyson_terms,
    ideal_final,
    ideal_series,
    noisy_final_batch,
    noisy_propagator,
)

from conftest import dephasing_model


def driven_model(coeffs, gate_time=20.0, **kwargs):
    model = dephasing_model(**kwargs)
    coeffs = np.asarray(coeffs, dtype=float)
    pulse = PulseAnsatz(coeffs, np.arange(1, coeffs.size + 1), gate_time)
    return dataclasses.replace(
        model, controls=(dataclasses.replace(model.controls[0], pulse=pulse),)
    )


def node_trajectory(grid, values, label="Z"):
    return NoiseTrajectory(np.asarray(values, dtype=float), grid.dt, seed=0, label=label)


class TestTimeGrid:
    def test_layout(self):
        grid = TimeGrid(10.0, 4)
        assert grid.dt == pytest.approx(2.5)
        np.testing.assert_allclose(grid.times, [0.0, 2.5, 5.0, 7.5, 10.0])
        np.testing.assert_allclose(grid.midpoints, [1.25, 3.75, 6.25, 8.75])

    def test_trapezoid_weights_sum_to_duration(self):
        grid = TimeGrid(12.0, 7)
        assert grid.trapezoid_weights.sum() == pytest.approx(12.0)
        assert grid.trapezoid_weights[0] == pytest.approx(grid.dt / 2)

    def test_validation(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 10)
        with pytest.raises(ValueError):
            TimeGrid(10.0, 0)


class TestIdealSeries:
    def test_drift_only_closed_form(self):
        model = dephasing_model(sigma=0.0, k_max=2)
        grid = TimeGrid(20.0, 500)
        series = ideal_series(model, grid)
        for i, t in enumerate(grid.times):
            expect = expm_hermitian(PAULI_Z / 2.0, -1j * t)
            np.testing.assert_allclose(series.ideal[i], expect, atol=1e-12)

    def test_final_matches_ideal_final(self):
        model = driven_model([0.7, -0.3])
        grid = TimeGrid(20.0, 300)
        series = ideal_series(model, grid)
        # prefix-product and blocked-product paths agree to roundoff
        np.testing.assert_allclose(series.final, ideal_final(model, grid), atol=1e-13)

    def test_unitarity(self):
        model = driven_model([1.1, 0.4, -0.8])
        series = ideal_series(model, TimeGrid(20.0, 400))
        assert unitarity_defect(series.ideal) < 1e-12

    def test_frames_are_interaction_picture(self):
        # drift commutes with Z coupling: R(t) = Z/2 at every node
        model = dephasing_model(sigma=0.1, k_max=2)
        series = ideal_series(model, TimeGrid(20.0, 100))
        r = series.frame("Z")
        assert r.shape == (101, 2, 2)
        np.testing.assert_allclose(r, np.broadcast_to(PAULI_Z / 2.0, r.shape), atol=1e-12)

    def test_frames_rotate_under_drive(self):
        # X drive rotates the Z coupling; conjugation by the exact propagator
        model = driven_model([0.9], sigma=0.1)
        grid = TimeGrid(20.0, 200)
        series = ideal_series(model, grid)
        r = series.frame("Z")
        for i in (0, 57, 200):
            u = series.ideal[i]
            np.testing.assert_allclose(r[i], dagger(u) @ (PAULI_Z / 2.0) @ u, atol=1e-12)

    def test_grid_convergence_is_second_order(self, hadamard):
        model = driven_model([0.8, 0.2, -0.5])
        finals = {n: ideal_final(model, TimeGrid(20.0, n)) for n in (100, 200, 400)}
        err_coarse = np.max(np.abs(finals[100] - finals[400]))
        err_fine = np.max(np.abs(finals[200] - finals[400]))
        assert err_coarse / err_fine == pytest.approx(4.0, rel=0.35)

    def test_validate_rejects_corruption(self):
        model = dephasing_model(sigma=0.1)
        series = ideal_series(model, TimeGrid(20.0, 50))
        bad_ideal = series.ideal.copy()
        bad_ideal[3] *= 1.001
        with pytest.raises(ValueError, match="non-unitary"):
            dataclasses.replace(series, ideal=bad_ideal).validate()
        bad_frames = {"Z": series.frames["Z"] + 1j * 1e-6}
        with pytest.raises(ValueError, match="Hermitian"):
            dataclasses.replace(series, frames=bad_frames).validate()


class TestNoisyPropagator:
    def test_commuting_noise_exact(self):
        # drift-only + Z noise commute, so the midpoint product factorizes:
        # U_noisy = U_ideal exp(-i Z/2 dt sum_m beta_mid(m)) with no error
        model = dephasing_model(sigma=0.3, k_max=2)
        grid = TimeGrid(20.0, 64)
        rng = np.random.default_rng(11)
        beta = rng.normal(0.0, 0.3, size=grid.n_steps + 1)
        got = noisy_propagator(model, grid, {"Z": node_trajectory(grid, beta)})
        mids = 0.5 * (beta[:-1] + beta[1:])
        phase = grid.dt * mids.sum()
        expect = ideal_final(model, grid) @ expm_hermitian(PAULI_Z / 2.0, -1j * phase)
        np.testing.assert_allclose(got, expect, atol=1e-12)

    def test_zero_noise_recovers_ideal(self):
        model = driven_model([0.5, -0.2], sigma=0.1)
        grid = TimeGrid(20.0, 128)
        got = noisy_propagator(model, grid, {"Z": node_trajectory(grid, np.zeros(129))})
        np.testing.assert_allclose(got, ideal_final(model, grid), atol=1e-13)

    def test_sequence_input_matches_mapping(self):
        model = driven_model([0.5], sigma=0.1)
        grid = TimeGrid(20.0, 32)
        traj = node_trajectory(grid, np.linspace(-0.1, 0.2, 33))
        a = noisy_propagator(model, grid, {"Z": traj})
        b = noisy_propagator(model, grid, [traj])
        np.testing.assert_array_equal(a, b)

    def test_mapping_validation(self):
        model = driven_model([0.5], sigma=0.1)
        grid = TimeGrid(20.0, 32)
        traj = node_trajectory(grid, np.zeros(33))
        with pytest.raises(ValueError, match="missing"):
            noisy_propagator(model, grid, {})
        with pytest.raises(ValueError):
            noisy_propagator(model, grid, {"Z": traj, "extra": traj})
        with pytest.raises(ValueError):
            noisy_propagator(model, grid, [traj, traj])

    def test_batch_matches_loop(self):
        model = driven_model([0.5, 0.3], sigma=0.2)
        grid = TimeGrid(20.0, 64)
        rng = np.random.default_rng(3)
        batch = rng.normal(0.0, 0.2, size=(5, 1, 65))
        got = noisy_final_batch(model, grid, batch)
        assert got.shape == (5, 2, 2)
        for b in range(5):
            single = noisy_propagator(
                model, grid, {"Z": node_trajectory(grid, batch[b, 0])}
            )
            np.testing.assert_allclose(got[b], single, atol=1e-13)

    def test_multi_channel_order(self):
        # X and Z noise together, additive in the step Hamiltonian
        from gatesmith.model import NoiseChannel, QuasiStaticCorrelation, StaticCoupling

        chans = (
            NoiseChannel("nz", StaticCoupling(PAULI_Z / 2.0), QuasiStaticCorrelation(0.1)),
            NoiseChannel("nx", StaticCoupling(PAULI_X / 2.0), QuasiStaticCorrelation(0.1)),
        )
        model = single_qubit_model(k_max=2, noises=chans)
        grid = TimeGrid(20.0, 16)
        bz = node_trajectory(grid, np.full(17, 0.2), label="nz")
        bx = node_trajectory(grid, np.full(17, -0.1), label="nx")
        got = noisy_propagator(model, grid, {"nz": bz, "nx": bx})
        h = PAULI_Z / 2.0 + 0.2 * PAULI_Z / 2.0 - 0.1 * PAULI_X / 2.0
        expect = expm_hermitian(h, -1j * 20.0)
        np.testing.assert_allclose(got, expect, atol=1e-12)


class TestDysonTerms:
    def test_first_order_is_weighted_sum(self):
        model = dephasing_model(sigma=0.3, k_max=2)
        grid = TimeGrid(20.0, 50)
        series = ideal_series(model, grid)
        beta = np.sin(grid.times)
        terms = dyson_terms(series, {"Z": node_trajectory(grid, beta)}, q_max=1)
        integral = float(np.sum(grid.trapezoid_weights * beta))
        expect = -1j * integral * PAULI_Z / 2.0
        np.testing.assert_allclose(terms.order(1), expect, atol=1e-14)

    def test_second_order_commuting_closed_form(self):
        # iterated integral of a commuting integrand collapses to K^2/2
        model = dephasing_model(sigma=0.3, k_max=2)
        grid = TimeGrid(20.0, 800)
        series = ideal_series(model, grid)
        beta = 0.3 * np.cos(0.7 * grid.times)
        terms = dyson_terms(series, {"Z": node_trajectory(grid, beta)}, q_max=2)
        k = float(np.sum(grid.trapezoid_weights * beta))
        expect = -(PAULI_Z / 2.0) @ (PAULI_Z / 2.0) * k**2 / 2.0
        np.testing.assert_allclose(terms.order(2), expect, rtol=1e-4, atol=1e-12)

    def test_scaling_in_noise_amplitude(self):
        model = driven_model([0.6], sigma=0.2)
        grid = TimeGrid(20.0, 64)
        series = ideal_series(model, grid)
        beta = np.cos(grid.times) * 0.1
        base = dyson_terms(series, {"Z": node_trajectory(grid, beta)}, q_max=4)
        lam = 0.37
        scaled = dyson_terms(series, {"Z": node_trajectory(grid, lam * beta)}, q_max=4)
        for q in range(1, 5):
            np.testing.assert_allclose(
                scaled.order(q), lam**q * base.order(q), rtol=1e-12, atol=1e-16
            )

    @pytest.mark.parametrize("q_max,lam", [(1, 0.2), (2, 0.3), (3, 0.6), (4, 1.0)])
    def test_consistency_with_propagator(self, q_max, lam):
        # U_ideal^dag U_noisy - sum_q Psi_q = O(lambda^{q_max+1}); halving the
        # amplitude shrinks the residual by ~2^{q_max+1}.  Ties the iterated
        # integrals to the full product through an independent code path.
        # Amplitudes grow with q_max so the next-order term stays above the
        # time-discretization floor.
        model = driven_model([0.8, -0.4], gate_time=5.0, sigma=0.2)
        grid = TimeGrid(5.0, 2500)
        series = ideal_series(model, grid)
        beta = np.sin(1.3 * grid.times + 0.4)

        def residual(scale):
            traj = {"Z": node_trajectory(grid, scale * beta)}
            noisy = noisy_propagator(model, grid, traj)
            err = dagger(series.final) @ noisy - np.eye(2)
            terms = dyson_terms(series, traj, q_max=q_max)
            for q in range(1, q_max + 1):
                err -= terms.order(q)
            return np.max(np.abs(err))

        r1, r2 = residual(lam), residual(lam / 2)
        expect = 2.0 ** (q_max + 1)
        assert r1 / r2 == pytest.approx(expect, rel=0.5)

    def test_order_bounds(self):
        model = dephasing_model(sigma=0.1, k_max=2)
        grid = TimeGrid(20.0, 16)
        series = ideal_series(model, grid)
        traj = {"Z": node_trajectory(grid, np.zeros(17))}
        with pytest.raises(ValueError):
            dyson_terms(series, traj, q_max=0)
        terms = dyson_terms(series, traj, q_max=2)
        with pytest.raises(ValueError, match="order"):
            terms.order(3)
        assert isinstance(terms, DysonTerms)

    def test_trajectory_length_checked(self):
        model = dephasing_model(sigma=0.1, k_max=2)
        grid = TimeGrid(20.0, 16)
        series = ideal_series(model, grid)
        with pytest.raises(ValueError):
            dyson_terms(series, {"Z": node_trajectory(grid, np.zeros(5))}, q_max=1)

    def test_noise_enters_from_simulation(self):
        # end to end: OU path into the series, finite first order
        model = dephasing_model(sigma=0.1, gamma=0.5, k_max=2)
        grid = TimeGrid(20.0, 100)
        series = ideal_series(model, grid)
        traj = simulate_ou(0.1, 0.5, grid.dt, grid.n_steps, seed=8, label="Z")
        terms = dyson_terms(series, {"Z": traj}, q_max=2)
        assert np.max(np.abs(terms.order(1))) > 0.0


class TestStepResolutionWarning:
    def test_warns_on_coarse_grid(self):
        model = driven_model([2.0], sigma=0.0)
        with pytest.warns(UserWarning, match="under-resolved"):
            ideal_series(model, TimeGrid(20.0, 20))

    def test_silent_on_fine_grid(self):
        import warnings

        model = driven_model([0.5], sigma=0.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ideal_series(model, TimeGrid(20.0, 2000))

