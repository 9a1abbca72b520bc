"""System description: controls, noise couplings, correlation functions, targets.

A `SystemModel` is the single source of truth for a synthesis problem: a
static drift, one composite-sine pulse per control channel, and a list of
classical noise channels.  Each noise channel couples either through a fixed
operator (multiplied by a dimensionless noise amplitude) or multiplicatively
through a control field, and carries a stationary correlation model.

Frequencies are expressed in units of the qubit splitting and times in its
inverse, so the drift prefactor is 1.0 in the standard setups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Union

import numpy as np

from . import noise as _noise
from .operators import PAULI_X, PAULI_Z, assert_hermitian, kron, unitarity_defect

__all__ = [
    "MAX_HARMONICS",
    "PulseAnsatz",
    "ControlChannel",
    "StaticCoupling",
    "MultiplicativeCoupling",
    "OUCorrelation",
    "QuasiStaticCorrelation",
    "TwoPeakCorrelation",
    "TabulatedPSDCorrelation",
    "CorrelationSpec",
    "NoiseChannel",
    "SystemModel",
    "TargetGate",
    "evaluate_pulse",
    "ideal_hamiltonian",
    "noise_operator",
    "correlation",
    "lag_kernel",
    "named_gate",
    "single_qubit_model",
    "two_qubit_model",
]

MAX_HARMONICS = 64


@dataclass(frozen=True, eq=False)
class PulseAnsatz:
    """Composite-sine envelope a_k sin(m_k pi t / t_f) plus a constant offset.

    Every sine vanishes at t = 0 and t = t_f, so the modulated part of the
    field switches on and off smoothly; a nonzero `constant_offset` models an
    always-on coupling that the sweep does not switch.
    """

    coefficients: np.ndarray
    harmonics: np.ndarray
    gate_time: float
    constant_offset: float = 0.0

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=float)
        harm = np.asarray(self.harmonics, dtype=int)
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "harmonics", harm)
        if coeffs.ndim != 1 or harm.shape != coeffs.shape:
            raise ValueError("coefficients and harmonics must be 1-D and matched in length")
        if coeffs.size < 1 or coeffs.size > MAX_HARMONICS:
            raise ValueError(f"number of harmonics must be in 1..{MAX_HARMONICS}")
        if np.any(harm < 1) or np.any(np.diff(harm) <= 0):
            raise ValueError("harmonics must be positive and strictly increasing")
        if not (self.gate_time > 0.0):
            raise ValueError("gate_time must be positive")

    @classmethod
    def zeros(cls, k_max: int, gate_time: float, constant_offset: float = 0.0) -> "PulseAnsatz":
        """All-zero coefficients on consecutive harmonics 1..k_max."""
        return cls(np.zeros(k_max), np.arange(1, k_max + 1), gate_time, constant_offset)

    def values(self, t: np.ndarray) -> np.ndarray:
        """Field values on an array of times inside [0, gate_time]."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.gate_time * (1 + 1e-12)):
            raise ValueError("time outside [0, gate_time]")
        phases = np.multiply.outer(t, self.harmonics * (np.pi / self.gate_time))
        return np.sin(phases) @ self.coefficients + self.constant_offset

    def value(self, t: float) -> float:
        return float(self.values(np.asarray([t]))[0])


def evaluate_pulse(pulse: PulseAnsatz, t: float) -> float:
    """Scalar field value of `pulse` at time t (t must lie in [0, gate_time])."""
    return pulse.value(t)


@dataclass(frozen=True, eq=False)
class ControlChannel:
    """A controllable coupling: `pulse`(t) times a Hermitian operator."""

    label: str
    operator: np.ndarray
    pulse: PulseAnsatz
    optimize_offset: bool = False

    def __post_init__(self):
        op = assert_hermitian(np.asarray(self.operator, dtype=complex), f"control {self.label!r} operator")
        object.__setattr__(self, "operator", op)


@dataclass(frozen=True, eq=False)
class StaticCoupling:
    """Noise enters as beta(t) * prefactor * operator."""

    operator: np.ndarray
    prefactor: float = 1.0

    def __post_init__(self):
        op = assert_hermitian(np.asarray(self.operator, dtype=complex), "static noise operator")
        object.__setattr__(self, "operator", op)


@dataclass(frozen=True)
class MultiplicativeCoupling:
    """Noise enters as beta(t) * field(t) * operator of the named control.

    Models relative amplitude errors on a drive: the noise scales with the
    instantaneous field rather than adding to it.
    """

    control_label: str


Coupling = Union[StaticCoupling, MultiplicativeCoupling]


@dataclass(frozen=True)
class OUCorrelation:
    """Stationary Ornstein-Uhlenbeck process: C(tau) = sigma^2 exp(-gamma |tau|)."""

    sigma: float
    gamma: float

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be non-negative")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive; use QuasiStaticCorrelation for frozen noise")


@dataclass(frozen=True)
class QuasiStaticCorrelation:
    """Noise frozen over a run: C(tau) = sigma^2 for every lag."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class TwoPeakCorrelation:
    """Lorentzian peak at zero frequency plus a pair mirrored at +-5*gamma.

    The spectral density is
        S(w) = sigma^2 [ 2 gamma / (gamma^2 + w^2)
                         + gamma / (gamma^2 + (5 gamma - w)^2)
                         + gamma / (gamma^2 + (5 gamma + w)^2) ],
    and the correlation function is obtained by numerical inverse Fourier
    transform.  No trajectory generator is attached; verification against
    sampled noise is not offered for this model.
    """

    sigma: float
    gamma: float

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be non-negative")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True, eq=False)
class TabulatedPSDCorrelation:
    """Correlation defined by a sampled one-sided spectral density."""

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
            raise ValueError("omega grid must be non-negative and strictly increasing")
        if np.any(s < 0.0):
            raise ValueError("spectral density must be non-negative")

    @property
    def sigma(self) -> float:
        """RMS amplitude implied by the tabulated density."""
        return math.sqrt(max(correlation(self, 0.0, 0.0), 0.0))


CorrelationSpec = Union[
    OUCorrelation, QuasiStaticCorrelation, TwoPeakCorrelation, TabulatedPSDCorrelation
]


@dataclass(frozen=True)
class NoiseChannel:
    label: str
    coupling: Coupling
    correlation: CorrelationSpec


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Drift + controls + noise channels on n qubits."""

    n_qubits: int
    drift: np.ndarray
    controls: tuple[ControlChannel, ...]
    noises: tuple[NoiseChannel, ...] = ()

    def __post_init__(self):
        if self.n_qubits not in (1, 2):
            raise ValueError("one or two qubits supported")
        dim = 2**self.n_qubits
        drift = assert_hermitian(np.asarray(self.drift, dtype=complex), "drift")
        if drift.shape != (dim, dim):
            raise ValueError(f"drift must be {dim}x{dim}")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "controls", tuple(self.controls))
        object.__setattr__(self, "noises", tuple(self.noises))
        labels = [c.label for c in self.controls] + [n.label for n in self.noises]
        if len(set(labels)) != len(labels):
            raise ValueError("channel labels must be unique")
        control_labels = {c.label for c in self.controls}
        gate_times = {c.pulse.gate_time for c in self.controls}
        if len(gate_times) > 1:
            raise ValueError("all control pulses must share one gate time")
        for ch in self.controls:
            if ch.operator.shape != (dim, dim):
                raise ValueError(f"control {ch.label!r} operator must be {dim}x{dim}")
        for nz in self.noises:
            if isinstance(nz.coupling, StaticCoupling):
                if nz.coupling.operator.shape != (dim, dim):
                    raise ValueError(f"noise {nz.label!r} operator must be {dim}x{dim}")
            elif nz.coupling.control_label not in control_labels:
                raise ValueError(
                    f"noise {nz.label!r} multiplies unknown control {nz.coupling.control_label!r}"
                )

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def gate_time(self) -> float:
        if not self.controls:
            raise ValueError("model has no control channels")
        return self.controls[0].pulse.gate_time

    def control(self, label: str) -> ControlChannel:
        for ch in self.controls:
            if ch.label == label:
                return ch
        raise KeyError(label)

    def with_pulses(self, pulses: dict[str, PulseAnsatz]) -> "SystemModel":
        """Copy of the model with some control pulses replaced."""
        new_controls = tuple(
            replace(ch, pulse=pulses.get(ch.label, ch.pulse)) for ch in self.controls
        )
        return replace(self, controls=new_controls)


def ideal_hamiltonian(model: SystemModel, t: float) -> np.ndarray:
    """Drift plus all control terms at time t."""
    h = model.drift.copy()
    for ch in model.controls:
        h += ch.pulse.value(t) * ch.operator
    return h


def noise_operator(model: SystemModel, channel: int | str, t: float) -> np.ndarray:
    """Operator multiplying the noise amplitude of one channel at time t."""
    nz = model.noises[channel] if isinstance(channel, int) else next(
        n for n in model.noises if n.label == channel
    )
    if isinstance(nz.coupling, StaticCoupling):
        return nz.coupling.prefactor * nz.coupling.operator
    ctrl = model.control(nz.coupling.control_label)
    return ctrl.pulse.value(t) * ctrl.operator


def correlation(spec: CorrelationSpec, t1: float, t2: float) -> float:
    """Two-time correlation C(t1, t2) = C(t1 - t2) of a stationary spec.

    OU and quasi-static models evaluate in closed form; the spectral models
    go through a numerical inverse Fourier transform of the density with the
    convention C(tau) = (1/2pi) Int S(w) e^{i w tau} dw.
    """
    tau = abs(t1 - t2)
    if isinstance(spec, OUCorrelation):
        return spec.sigma**2 * math.exp(-spec.gamma * tau)
    if isinstance(spec, QuasiStaticCorrelation):
        return spec.sigma**2
    if isinstance(spec, TwoPeakCorrelation):
        return spec.sigma**2 * _twopeak_unit_cf(spec.gamma, tau)
    if isinstance(spec, TabulatedPSDCorrelation):
        return _noise.cf_from_psd(_noise.SpectralDensity(spec.omega, spec.values), tau)
    raise TypeError(f"unknown correlation spec {type(spec).__name__}")


@lru_cache(maxsize=4096)
def _twopeak_unit_cf(gamma: float, tau: float) -> float:
    def unit_psd(w):
        return (
            2.0 * gamma / (gamma**2 + w**2)
            + gamma / (gamma**2 + (5.0 * gamma - w) ** 2)
            + gamma / (gamma**2 + (5.0 * gamma + w) ** 2)
        )

    return _noise.psd_cosine_transform(unit_psd, tau, scale=gamma)


def lag_kernel(spec: CorrelationSpec, dt: float, n_steps: int) -> np.ndarray:
    """C(m*dt) for m = 0..n_steps, the Toeplitz kernel on a uniform grid."""
    if dt <= 0.0 or n_steps < 0:
        raise ValueError("dt must be positive and n_steps non-negative")
    lags = np.arange(n_steps + 1) * dt
    if isinstance(spec, OUCorrelation):
        return spec.sigma**2 * np.exp(-spec.gamma * lags)
    if isinstance(spec, QuasiStaticCorrelation):
        return np.full(n_steps + 1, spec.sigma**2)
    if isinstance(spec, TwoPeakCorrelation):
        unit = _twopeak_unit_kernel(spec.gamma, dt, n_steps)
        return spec.sigma**2 * np.asarray(unit)
    if isinstance(spec, TabulatedPSDCorrelation):
        sd = _noise.SpectralDensity(spec.omega, spec.values)
        return np.array([_noise.cf_from_psd(sd, tau) for tau in lags])
    raise TypeError(f"unknown correlation spec {type(spec).__name__}")


@lru_cache(maxsize=64)
def _twopeak_unit_kernel(gamma: float, dt: float, n_steps: int) -> tuple[float, ...]:
    return tuple(_twopeak_unit_cf(gamma, m * dt) for m in range(n_steps + 1))


def named_gate(name: str) -> "TargetGate":
    """One of the shipped targets: hadamard, phase, pi8, cnot."""
    key = name.strip().lower()
    if key not in _NAMED_GATES:
        raise KeyError(f"unknown gate {name!r}; available: {sorted(_NAMED_GATES)}")
    return TargetGate(_NAMED_GATES[key], key)


@dataclass(frozen=True, eq=False)
class TargetGate:
    unitary: np.ndarray
    name: str = ""

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=complex)
        object.__setattr__(self, "unitary", u)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError("target must be a square matrix")
        if unitarity_defect(u) > 1e-12:
            raise ValueError("target must be unitary to 1e-12")

    @property
    def dim(self) -> int:
        return self.unitary.shape[0]


_NAMED_GATES = {
    "hadamard": np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0),
    "phase": np.diag([1.0, 1.0j]),
    "pi8": np.diag([1.0, np.exp(0.25j * np.pi)]),
    "cnot": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
}


def single_qubit_model(
    *,
    gate_time: float = 20.0,
    k_max: int = 10,
    controls: tuple[str, ...] = ("X",),
    noises: tuple[NoiseChannel, ...] = (),
    drift_prefactor: float = 1.0,
) -> SystemModel:
    """Standard one-qubit layout: drift Z/2 plus transverse drive(s).

    Control labels may be "X" or "Y"; coefficients start at zero.
    """
    ops = {"X": PAULI_X / 2.0, "Y": np.array([[0, -0.5j], [0.5j, 0]], dtype=complex)}
    chans = []
    for label in controls:
        if label not in ops:
            raise ValueError(f"unsupported control label {label!r}")
        chans.append(ControlChannel(label, ops[label], PulseAnsatz.zeros(k_max, gate_time)))
    return SystemModel(
        n_qubits=1,
        drift=drift_prefactor * PAULI_Z / 2.0,
        controls=tuple(chans),
        noises=noises,
    )


def two_qubit_model(
    *,
    gate_time: float = 100.0,
    k_max_drive: int = 16,
    k_max_coupling: int = 8,
    noises: tuple[NoiseChannel, ...] = (),
    drift_prefactor: float = 1.0,
) -> SystemModel:
    """Two qubits with individual X drives and a tunable ZZ coupling.

    The coupling pulse carries a constant offset that is optimized together
    with its sine coefficients.
    """
    x1 = kron(PAULI_X, np.eye(2)) / 2.0
    x2 = kron(np.eye(2), PAULI_X) / 2.0
    zz = kron(PAULI_Z, PAULI_Z) / 2.0
    drift = drift_prefactor * (kron(PAULI_Z, np.eye(2)) + kron(np.eye(2), PAULI_Z)) / 2.0
    return SystemModel(
        n_qubits=2,
        drift=drift,
        controls=(
            ControlChannel("X1", x1, PulseAnsatz.zeros(k_max_drive, gate_time)),
            ControlChannel("X2", x2, PulseAnsatz.zeros(k_max_drive, gate_time)),
            ControlChannel(
                "J", zz, PulseAnsatz.zeros(k_max_coupling, gate_time), optimize_offset=True
            ),
        ),
        noises=noises,
    )
