"""Classical noise: trajectory generation, spectral densities, correlation recovery.

Trajectories are sampled realizations of stationary Gaussian processes on the
propagation time grid.  Only the Ornstein-Uhlenbeck family (including its
frozen gamma = 0 limit) can be sampled; purely spectral noise models enter
the cost through their correlation function instead.

Seeding is counter-based: every trajectory's generator is derived from
(master seed, channel index, realization index), so ensembles are
reproducible regardless of evaluation order or degree of parallelism.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.signal import lfilter

__all__ = [
    "NoiseTrajectory",
    "SpectralDensity",
    "trajectory_seed",
    "simulate_ou",
    "simulate_channel",
    "simulate_channel_batch",
    "psd_ou",
    "psd_twopeak",
    "psd_cosine_transform",
    "cf_from_psd",
    "empirical_cf",
    "trajectory_to_csv",
]

# Euler updates of the OU recursion degrade for gamma*dt beyond this.
STABILITY_LIMIT = 0.1


@dataclass(frozen=True, eq=False)
class NoiseTrajectory:
    """Sampled noise amplitudes beta(t_i) on a uniform grid, i = 0..n_steps."""

    values: np.ndarray
    dt: float
    seed: int
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("trajectory must be a 1-D array with >= 2 samples")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    @property
    def n_steps(self) -> int:
        return self.values.size - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt


@dataclass(frozen=True, eq=False)
class SpectralDensity:
    """One-sided tabulated spectral density S(w) on w >= 0."""

    omega: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        s = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "values", s)
        if w.ndim != 1 or w.shape != s.shape or w.size < 2:
            raise ValueError("omega and values must be matched 1-D arrays with >= 2 samples")
        if w[0] < 0.0 or np.any(np.diff(w) <= 0.0):
            raise ValueError("omega grid must start at >= 0 and increase strictly")
        if np.any(s < 0.0):
            raise ValueError("spectral density must be non-negative")

    def area(self) -> float:
        return float(np.trapezoid(self.values, self.omega))

    def tail_fraction(self) -> float:
        """Estimated mass beyond the grid, assuming a 1/w^2 tail."""
        area = self.area()
        if area <= 0.0:
            return 0.0
        tail = float(self.values[-1] * self.omega[-1])
        return tail / (area + tail)


def trajectory_seed(master_seed: int, channel_index: int, realization_index: int) -> np.random.SeedSequence:
    """Deterministic per-trajectory seed, independent of evaluation order."""
    return np.random.SeedSequence(master_seed, spawn_key=(channel_index, realization_index))


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        seq = seed
    else:
        seq = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seq))


def _seed_tag(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1, np.uint64)[0])
    return int(seed)


def simulate_ou(
    sigma: float,
    gamma: float,
    dt: float,
    n_steps: int,
    seed,
    label: str = "",
) -> NoiseTrajectory:
    """Sample one Ornstein-Uhlenbeck path on a uniform grid.

    The update is beta(t + dt) = (1 - gamma dt) beta(t) + sigma sqrt(2 gamma)
    dW(t) with beta(0) drawn from the stationary law N(0, sigma^2).  gamma = 0
    freezes the initial draw, which is the quasi-static limit.

    Parameters
    ----------
    seed : int or numpy.random.SeedSequence
        Source of all randomness for this path; equal seeds give equal paths.
    """
    if sigma < 0.0 or gamma < 0.0:
        raise ValueError("sigma and gamma must be non-negative")
    if dt <= 0.0 or n_steps < 1:
        raise ValueError("need dt > 0 and n_steps >= 1")
    if gamma * dt > STABILITY_LIMIT:
        raise ValueError(
            f"gamma*dt = {gamma * dt:.3g} exceeds the stability limit {STABILITY_LIMIT}; refine the grid"
        )
    z = _generator(seed).standard_normal(n_steps + 1)
    drive = np.empty(n_steps + 1)
    drive[0] = sigma * z[0]
    drive[1:] = sigma * np.sqrt(2.0 * gamma * dt) * z[1:]
    values = lfilter([1.0], [1.0, -(1.0 - gamma * dt)], drive)
    return NoiseTrajectory(values, dt, _seed_tag(seed), label)


def simulate_channel(spec, dt: float, n_steps: int, seed, label: str = "") -> NoiseTrajectory:
    """Sample a trajectory for a correlation spec that admits one."""
    from .model import OUCorrelation, QuasiStaticCorrelation  # deferred: model imports this module

    if isinstance(spec, OUCorrelation):
        return simulate_ou(spec.sigma, spec.gamma, dt, n_steps, seed, label)
    if isinstance(spec, QuasiStaticCorrelation):
        return simulate_ou(spec.sigma, 0.0, dt, n_steps, seed, label)
    raise ValueError(
        f"{type(spec).__name__} has no trajectory generator; it enters through its "
        "correlation function only (see the spectral-domain cost)"
    )


def simulate_channel_batch(
    spec,
    dt: float,
    n_steps: int,
    master_seed: int,
    channel_index: int,
    realization_indices: np.ndarray,
) -> np.ndarray:
    """Stack of trajectories for one channel, shape (len(indices), n_steps + 1).

    Row r reproduces simulate_channel(...) with the seed derived from
    (master_seed, channel_index, realization_indices[r]).
    """
    from .model import OUCorrelation, QuasiStaticCorrelation

    if isinstance(spec, OUCorrelation):
        sigma, gamma = spec.sigma, spec.gamma
    elif isinstance(spec, QuasiStaticCorrelation):
        sigma, gamma = spec.sigma, 0.0
    else:
        raise ValueError(f"{type(spec).__name__} has no trajectory generator")
    if gamma * dt > STABILITY_LIMIT:
        raise ValueError(
            f"gamma*dt = {gamma * dt:.3g} exceeds the stability limit {STABILITY_LIMIT}; refine the grid"
        )
    indices = np.asarray(realization_indices, dtype=int)
    drive = np.empty((indices.size, n_steps + 1))
    for row, r in enumerate(indices):
        z = _generator(trajectory_seed(master_seed, channel_index, int(r))).standard_normal(
            n_steps + 1
        )
        drive[row, 0] = sigma * z[0]
        drive[row, 1:] = sigma * np.sqrt(2.0 * gamma * dt) * z[1:]
    return lfilter([1.0], [1.0, -(1.0 - gamma * dt)], drive, axis=1)


def psd_ou(sigma: float, gamma: float, omega) -> np.ndarray:
    """Lorentzian spectral density 2 sigma^2 gamma / (gamma^2 + w^2)."""
    if gamma <= 0.0:
        raise ValueError(
            "gamma must be positive: the gamma = 0 limit is a delta spike at w = 0, "
            "handled by the quasi-static correlation instead"
        )
    w = np.asarray(omega, dtype=float)
    return 2.0 * sigma**2 * gamma / (gamma**2 + w**2)


def psd_twopeak(sigma: float, gamma: float, omega) -> np.ndarray:
    """Low-frequency Lorentzian plus a mirrored pair of peaks at +-5*gamma."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    w = np.asarray(omega, dtype=float)
    return sigma**2 * (
        2.0 * gamma / (gamma**2 + w**2)
        + gamma / (gamma**2 + (5.0 * gamma - w) ** 2)
        + gamma / (gamma**2 + (5.0 * gamma + w) ** 2)
    )


def psd_cosine_transform(psd, tau: float, scale: float, rtol: float = 1e-10) -> float:
    """(1/pi) Int_0^inf S(w) cos(w tau) dw by adaptive quadrature.

    `scale` is a characteristic width of S used to split off the peaked
    region at tau = 0; for tau > 0 the oscillatory weight is handled by the
    dedicated Fourier integrator.
    """
    tau = abs(float(tau))
    if tau == 0.0:
        near, _ = quad(psd, 0.0, 50.0 * scale, epsabs=0.0, epsrel=rtol, limit=400)
        far, _ = quad(psd, 50.0 * scale, np.inf, epsabs=0.0, epsrel=rtol, limit=400)
        return (near + far) / np.pi
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        value, _ = quad(psd, 0.0, np.inf, weight="cos", wvar=tau, epsabs=1e-14, limlst=200)
    return value / np.pi


def cf_from_psd(sd: SpectralDensity, tau: float) -> float:
    """Correlation at lag tau from a tabulated one-sided density.

    C(tau) = (1/2pi) Int_-inf^inf S(w) e^{i w tau} dw, evaluated as a cosine
    transform on the tabulated grid.  A grid whose estimated tail mass
    exceeds 1% of the total triggers a warning rather than an error.
    """
    tail = sd.tail_fraction()
    if tail > 0.01:
        warnings.warn(
            f"spectral grid too narrow: estimated {100 * tail:.1f}% of the density lies "
            "beyond the last sample",
            stacklevel=2,
        )
    integrand = sd.values * np.cos(sd.omega * float(tau))
    return float(np.trapezoid(integrand, sd.omega)) / np.pi


def empirical_cf(trajectories, lag: int) -> tuple[float, float]:
    """Ensemble estimate of C(lag*dt) with its standard error.

    Averages beta(t) beta(t + lag*dt) over all time origins within each
    trajectory, then treats the per-trajectory means as independent samples.
    """
    trajs = list(trajectories)
    if not trajs:
        raise ValueError("need at least one trajectory")
    n = trajs[0].values.size
    if not (0 <= lag < n):
        raise ValueError(f"lag {lag} outside 0..{n - 1}")
    per_traj = np.array(
        [float(np.mean(t.values[: n - lag] * t.values[lag:])) for t in trajs]
    )
    mean = float(np.mean(per_traj))
    if per_traj.size == 1:
        return mean, float("inf")
    stderr = float(np.std(per_traj, ddof=1) / np.sqrt(per_traj.size))
    return mean, stderr


def trajectory_to_csv(trajectory: NoiseTrajectory, path) -> None:
    """Write one trajectory as CSV with columns t, beta."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "beta"])
        for t, beta in zip(trajectory.times, trajectory.values):
            writer.writerow([f"{t:.12e}", f"{beta:.12e}"])
