"""Frequency-domain view of noise sensitivity.

For each noise channel the filter function F(w) measures how strongly the
pulse transmits spectral weight at w into gate infidelity: the ensemble
average of the second-order infidelity equals

    (1/2pi) Int_-inf^inf dw S(w) F(w) / w^2

with the correlation convention C(tau) = (1/2pi) Int S(w) e^{i w tau} dw.
The ratio F(w)/w^2 is what the quadrature actually uses; it is finite at
w = 0 and is computed directly from the Fourier amplitudes of the
interaction-frame coupling coefficients, never by dividing out w^2.

Because the Fourier integrals use the same trapezoid weights as the
time-domain quadrature, the two routes to the averaged infidelity agree to
the accuracy of the frequency grid alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import noise as _noise
from .model import (
    CorrelationSpec,
    NoiseChannel,
    OUCorrelation,
    QuasiStaticCorrelation,
    TabulatedPSDCorrelation,
    TwoPeakCorrelation,
)
from .cost import _frame_coefficients
from .propagate import PropagatorSeries

__all__ = [
    "FilterFunction",
    "FtfWindow",
    "filter_function",
    "filter_functions",
    "default_frequency_grid",
    "psd_on_grid",
    "avg_noise_infidelity_frequency",
    "ftf_cost",
    "weight_from_rows",
    "traceless_rows",
]

_TRACELESS_TOL = 1e-10

NORMALIZATION_NOTE = (
    "two-sided angular-frequency convention: avg second-order infidelity = "
    "(1/2pi) Int dw S(w) F(w)/w^2 with C(tau) = (1/2pi) Int S(w) e^{i w tau} dw"
)


@dataclass(frozen=True, eq=False)
class FilterFunction:
    """F(w) per noise channel on a shared non-negative frequency grid."""

    omega: np.ndarray
    weights: dict[str, np.ndarray]
    normalization: str = NORMALIZATION_NOTE

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", w)
        if w.ndim != 1 or w.size < 2 or w[0] < 0.0 or np.any(np.diff(w) <= 0.0):
            raise ValueError("omega must be a strictly increasing non-negative grid")
        for label, vals in self.weights.items():
            if vals.shape != w.shape:
                raise ValueError(f"weight array for {label!r} does not match the grid")

    def weight(self, label: str) -> np.ndarray:
        """F(w)/w^2, finite everywhere including w = 0."""
        return self.weights[label]

    def response(self, label: str) -> np.ndarray:
        """F(w) itself."""
        return self.omega**2 * self.weights[label]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.weights)


@dataclass(frozen=True)
class FtfWindow:
    """Frequency band [low, high] over which a filter function is costed."""

    low: float
    high: float

    def __post_init__(self):
        # low == high is a degenerate band; ftf_cost treats it as zero area.
        if self.low < 0.0 or self.high < self.low:
            raise ValueError("need 0 <= low <= high")


def weight_from_rows(rows: np.ndarray, times: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Sum over rows u_a of |sum_i u_a[i] e^{-i w t_i}|^2, chunked over w.

    `rows` must already carry the quadrature weights.  This is the low-level
    kernel behind filter_function; optimizers call it directly with
    precomputed rows to avoid rebuilding the series bookkeeping.
    """
    out = np.empty(omega.size)
    chunk = max(1, 4_000_000 // max(times.size, 1))
    for start in range(0, omega.size, chunk):
        phases = np.multiply.outer(times, omega[start : start + chunk])
        re = rows @ np.cos(phases)
        im = rows @ np.sin(phases)
        out[start : start + chunk] = np.sum(re * re + im * im, axis=0)
    return out


def traceless_rows(series: PropagatorSeries, label: str) -> np.ndarray:
    """Weighted frame coefficients of a channel, rejecting traceful coupling."""
    coeffs = _frame_coefficients(series, label)
    trace_part = float(np.max(np.abs(coeffs[0])))
    scale = max(float(np.max(np.abs(coeffs))), 1.0)
    if trace_part > _TRACELESS_TOL * scale:
        raise ValueError(
            f"noise channel {label!r} couples through a traceful operator; "
            "its fluctuating global phase has no filter-function representation"
        )
    return coeffs * series.grid.trapezoid_weights


def _fourier_weight(series: PropagatorSeries, label: str, omega: np.ndarray) -> np.ndarray:
    return weight_from_rows(traceless_rows(series, label), series.grid.times, omega)


def filter_function(series: PropagatorSeries, channel: str, omega: np.ndarray) -> FilterFunction:
    """Filter function of a single noise channel on the given grid."""
    omega = np.asarray(omega, dtype=float)
    return FilterFunction(omega, {channel: _fourier_weight(series, channel, omega)})


def filter_functions(
    series: PropagatorSeries, noises: tuple[NoiseChannel, ...], omega: np.ndarray
) -> FilterFunction:
    """Filter functions of every listed channel on one shared grid."""
    omega = np.asarray(omega, dtype=float)
    weights = {nz.label: _fourier_weight(series, nz.label, omega) for nz in noises}
    return FilterFunction(omega, weights)


def default_frequency_grid(
    specs,
    gate_time: float,
    n_points: int = 2048,
    span_factor: float = 40.0,
    refine: bool = True,
) -> np.ndarray:
    """Frequency grid adapted to the correlation models in play.

    A uniform base grid spans [0, span_factor * max(width, 1/gate_time)];
    around every Lorentzian peak an extra dense cluster resolves widths far
    below the base spacing, which keeps the frequency-domain average accurate
    for narrow-band noise.
    """
    peaks: list[tuple[float, float]] = []
    for spec in specs:
        if isinstance(spec, OUCorrelation):
            peaks.append((0.0, spec.gamma))
        elif isinstance(spec, TwoPeakCorrelation):
            peaks.append((0.0, spec.gamma))
            peaks.append((5.0 * spec.gamma, spec.gamma))
        elif isinstance(spec, TabulatedPSDCorrelation):
            peaks.append((0.0, float(spec.omega[-1]) / span_factor))
        elif isinstance(spec, QuasiStaticCorrelation):
            raise ValueError("quasi-static noise has no spectral density")
        else:
            raise TypeError(f"unknown correlation spec {type(spec).__name__}")
    if not peaks:
        raise ValueError("need at least one spectral noise model")
    widest = max(w for _, w in peaks)
    omega_max = span_factor * max(widest, 1.0 / gate_time)
    omega_max = max(omega_max, max(c + span_factor * w for c, w in peaks))
    grid = [np.linspace(0.0, omega_max, n_points)]
    if refine:
        for center, width in peaks:
            cluster = center + np.linspace(-8.0, 8.0, 1025) * width
            grid.append(cluster[(cluster >= 0.0) & (cluster <= omega_max)])
    merged = np.unique(np.concatenate(grid))
    return merged


def psd_on_grid(spec: CorrelationSpec, omega: np.ndarray) -> _noise.SpectralDensity:
    """Spectral density of a correlation model sampled on a grid."""
    omega = np.asarray(omega, dtype=float)
    if isinstance(spec, OUCorrelation):
        return _noise.SpectralDensity(omega, _noise.psd_ou(spec.sigma, spec.gamma, omega))
    if isinstance(spec, TwoPeakCorrelation):
        return _noise.SpectralDensity(omega, _noise.psd_twopeak(spec.sigma, spec.gamma, omega))
    if isinstance(spec, TabulatedPSDCorrelation):
        vals = np.interp(omega, spec.omega, spec.values, left=0.0, right=0.0)
        return _noise.SpectralDensity(omega, vals)
    if isinstance(spec, QuasiStaticCorrelation):
        raise ValueError("quasi-static noise has no spectral density")
    raise TypeError(f"unknown correlation spec {type(spec).__name__}")


def avg_noise_infidelity_frequency(ff: FilterFunction, densities: dict) -> float:
    """Frequency-domain evaluation of the averaged second-order infidelity.

    `densities` maps channel labels to SpectralDensity objects or correlation
    specs; tabulated densities are interpolated onto the filter grid.  The
    integrand is even, so the two-sided integral is twice the one-sided
    trapezoid.
    """
    total = 0.0
    for label in ff.labels:
        src = densities[label]
        if isinstance(src, _noise.SpectralDensity):
            s_vals = np.interp(ff.omega, src.omega, src.values, left=0.0, right=0.0)
        else:
            s_vals = psd_on_grid(src, ff.omega).values
        total += float(np.trapezoid(s_vals * ff.weight(label), ff.omega)) / np.pi
    return total


def ftf_cost(ff: FilterFunction, window: FtfWindow, channel: str | None = None) -> float:
    """Integrated filter function over a frequency band.

    Sums Int_low^high F(w) dw over the selected channel (or all channels),
    the band-limited sensitivity used as an optimization surrogate when the
    true spectrum is uncertain below a cutoff.
    """
    lo, hi = window.low, window.high
    if lo < ff.omega[0] - 1e-12 or hi > ff.omega[-1] + 1e-12:
        raise ValueError(
            f"window [{lo}, {hi}] extends beyond the frequency grid "
            f"[{ff.omega[0]}, {ff.omega[-1]}]"
        )
    if hi == lo:
        return 0.0
    mask = (ff.omega >= lo) & (ff.omega <= hi)
    if int(np.count_nonzero(mask)) < 2:
        raise ValueError("window contains fewer than two grid points")
    labels = [channel] if channel is not None else list(ff.labels)
    total = 0.0
    for label in labels:
        total += float(np.trapezoid(ff.response(label)[mask], ff.omega[mask]))
    return total
