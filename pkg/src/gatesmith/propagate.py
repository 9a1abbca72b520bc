"""Time evolution on a uniform grid.

Steps are piecewise-constant exponentials using the midpoint field sample,
U(t_{i+1}) = exp(-i dt H(t_i + dt/2)) U(t_i), which is second-order accurate
in dt.  The ideal series also carries the interaction-frame noise operators
R_j(t_i) = U^dag(t_i) H_j(t_i) U(t_i) on the grid nodes; every quadrature
downstream (perturbative averages, Fourier integrals) uses trapezoid weights
on those nodes so the different routes to the same quantity stay mutually
consistent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import MultiplicativeCoupling, StaticCoupling, SystemModel
from .operators import (
    chain_product,
    chain_product_batch,
    dagger,
    expm_hermitian_stack,
    prefix_products,
    unitarity_defect,
)

__all__ = [
    "TimeGrid",
    "PropagatorSeries",
    "DysonTerms",
    "ideal_series",
    "ideal_final",
    "noisy_propagator",
    "noisy_final_batch",
    "dyson_terms",
]

UNITARITY_TOL = 1e-10
HERMITICITY_TOL = 1e-10
# Midpoint steps lose accuracy once dt * field approaches order one.
STEP_PHASE_WARN = 0.1


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with n_steps intervals over [0, gate_time]."""

    gate_time: float
    n_steps: int

    def __post_init__(self):
        if not (self.gate_time > 0.0):
            raise ValueError("gate_time must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def dt(self) -> float:
        return self.gate_time / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.gate_time, self.n_steps + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt

    @property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_steps + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass(frozen=True, eq=False)
class PropagatorSeries:
    """Ideal propagators U(t_i) and interaction-frame noise operators R_j(t_i)."""

    grid: TimeGrid
    ideal: np.ndarray
    frames: dict[str, np.ndarray]

    @property
    def final(self) -> np.ndarray:
        return self.ideal[-1]

    def frame(self, label: str) -> np.ndarray:
        return self.frames[label]

    def validate(self) -> None:
        defect = unitarity_defect(self.ideal)
        if defect > UNITARITY_TOL:
            raise ValueError(f"ideal propagators non-unitary (defect {defect:.3e})")
        if float(np.max(np.abs(self.ideal[0] - np.eye(self.ideal.shape[-1])))) > 1e-14:
            raise ValueError("series must start at the identity")
        for label, r in self.frames.items():
            h_defect = float(np.max(np.abs(r - dagger(r))))
            if h_defect > HERMITICITY_TOL:
                raise ValueError(
                    f"frame operators for channel {label!r} not Hermitian (defect {h_defect:.3e})"
                )


@dataclass(frozen=True, eq=False)
class DysonTerms:
    """Nested time-ordered integrals of the interaction-frame noise Hamiltonian.

    terms[q-1] holds the order-q matrix (-i)^q Int_{t1 > ... > tq} H(t1)...H(tq).
    """

    terms: tuple

    def order(self, q: int) -> np.ndarray:
        if not (1 <= q <= len(self.terms)):
            raise ValueError(f"order {q} not computed (have 1..{len(self.terms)})")
        return self.terms[q - 1]


def _midpoint_hamiltonians(model: SystemModel, grid: TimeGrid) -> np.ndarray:
    """Ideal Hamiltonian stack at the interval midpoints, shape (n_steps, d, d)."""
    mids = grid.midpoints
    h = np.broadcast_to(model.drift, (grid.n_steps, model.dim, model.dim)).copy()
    for ch in model.controls:
        h += ch.pulse.values(mids)[:, None, None] * ch.operator
    return h


def _noise_operator_stacks(model: SystemModel, grid: TimeGrid, times: np.ndarray) -> list[np.ndarray]:
    """Per-channel noise operator samples at `times`; static channels broadcast."""
    stacks = []
    for nz in model.noises:
        if isinstance(nz.coupling, StaticCoupling):
            op = nz.coupling.prefactor * nz.coupling.operator
            stacks.append(np.broadcast_to(op, (times.size,) + op.shape))
        else:
            ch = model.control(nz.coupling.control_label)
            stacks.append(ch.pulse.values(times)[:, None, None] * ch.operator)
    return stacks


def _check_step_size(h_stack: np.ndarray, dt: float) -> None:
    scale = float(np.max(np.abs(h_stack)))
    if scale * dt > STEP_PHASE_WARN:
        warnings.warn(
            f"dt * max|H| = {scale * dt:.3g} exceeds {STEP_PHASE_WARN}; "
            "the piecewise-constant steps may be under-resolved",
            stacklevel=3,
        )


def ideal_series(model: SystemModel, grid: TimeGrid, validate: bool = True) -> PropagatorSeries:
    """Propagate the noise-free model and build the frame operators.

    Returns the full prefix series U(t_0..t_N) together with R_j(t_i) for
    every noise channel, both on the grid nodes.
    """
    if model.controls and abs(model.gate_time - grid.gate_time) > 1e-12 * grid.gate_time:
        raise ValueError("grid gate_time differs from the pulse gate_time")
    h_mid = _midpoint_hamiltonians(model, grid)
    if validate:
        _check_step_size(h_mid, grid.dt)
    steps = expm_hermitian_stack(h_mid, -1j * grid.dt)
    ideal = prefix_products(steps)
    frames = {}
    if model.noises:
        u_dag = dagger(ideal)
        for nz, ops in zip(model.noises, _noise_operator_stacks(model, grid, grid.times)):
            frames[nz.label] = np.matmul(u_dag, np.matmul(ops, ideal))
    series = PropagatorSeries(grid, ideal, frames)
    if validate:
        series.validate()
    return series


def ideal_final(model: SystemModel, grid: TimeGrid) -> np.ndarray:
    """U(gate_time) of the noise-free model, skipping the prefix series."""
    steps = expm_hermitian_stack(_midpoint_hamiltonians(model, grid), -1j * grid.dt)
    return chain_product(steps)


def _midpoint_noise_values(values: np.ndarray) -> np.ndarray:
    """Midpoint noise estimate from node samples (mean of the two ends)."""
    return 0.5 * (values[..., 1:] + values[..., :-1])


def _align_trajectories(labels, trajectories) -> list:
    """Order trajectories to match `labels`; accepts a mapping or a sequence."""
    if hasattr(trajectories, "keys"):
        missing = [lb for lb in labels if lb not in trajectories]
        if missing:
            raise ValueError(f"missing trajectories for {missing}")
        extra = [k for k in trajectories if k not in labels]
        if extra:
            raise ValueError(f"unknown trajectory labels {extra}")
        return [trajectories[lb] for lb in labels]
    trajs = list(trajectories)
    if len(trajs) != len(labels):
        raise ValueError(f"need {len(labels)} trajectories, got {len(trajs)}")
    return trajs


def noisy_propagator(model: SystemModel, grid: TimeGrid, trajectories) -> np.ndarray:
    """Full propagator U(gate_time) for one noise realization.

    `trajectories` is a mapping keyed by noise label, or a sequence aligned
    with model.noises, each sampled on the grid nodes; the piecewise-constant
    steps use the midpoint estimate of each noise amplitude.
    """
    trajs = _align_trajectories([nz.label for nz in model.noises], trajectories)
    for nz, tr in zip(model.noises, trajs):
        if tr.values.size != grid.n_steps + 1:
            raise ValueError(f"trajectory for {nz.label!r} does not match the grid")
        if abs(tr.dt - grid.dt) > 1e-12 * grid.dt:
            raise ValueError(f"trajectory for {nz.label!r} uses a different step")
    h = _midpoint_hamiltonians(model, grid)
    for tr, ops in zip(trajs, _noise_operator_stacks(model, grid, grid.midpoints)):
        h = h + _midpoint_noise_values(tr.values)[:, None, None] * ops
    steps = expm_hermitian_stack(h, -1j * grid.dt)
    u = chain_product(steps)
    defect = unitarity_defect(u)
    if defect > UNITARITY_TOL:
        raise ValueError(f"noisy propagator non-unitary (defect {defect:.3e})")
    return u


def noisy_final_batch(model: SystemModel, grid: TimeGrid, batch_values: np.ndarray) -> np.ndarray:
    """Final propagators for a batch of realizations.

    batch_values has shape (B, n_channels, n_steps + 1): node samples of each
    channel's noise amplitude per realization.  Matches noisy_propagator
    realization by realization.
    """
    b = np.asarray(batch_values, dtype=float)
    if b.ndim != 3 or b.shape[1] != len(model.noises) or b.shape[2] != grid.n_steps + 1:
        raise ValueError("batch_values must have shape (B, n_channels, n_steps + 1)")
    h = _midpoint_hamiltonians(model, grid)[None]
    mids = _midpoint_noise_values(b)
    for c, ops in enumerate(_noise_operator_stacks(model, grid, grid.midpoints)):
        h = h + mids[:, c, :, None, None] * ops[None]
    steps = expm_hermitian_stack(h, -1j * grid.dt)
    u = chain_product_batch(steps)
    defect = unitarity_defect(u)
    if defect > UNITARITY_TOL:
        raise ValueError(f"noisy propagators non-unitary (defect {defect:.3e})")
    return u


def _running_trapezoid(f: np.ndarray, dt: float) -> np.ndarray:
    """K_i = Int_0^{t_i} f dt by the trapezoid rule, vectorized over nodes."""
    csum = np.cumsum(f, axis=0)
    return dt * (csum - 0.5 * (f + f[0]))


def dyson_terms(series: PropagatorSeries, trajectories, q_max: int = 2) -> DysonTerms:
    """Time-ordered expansion terms of one noise realization.

    Builds the interaction-frame noise Hamiltonian on the grid nodes from the
    stored frame operators and the trajectory node values, then evaluates the
    nested integrals with running trapezoid rules.
    """
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    trajs = _align_trajectories(list(series.frames), trajectories)
    n_nodes = series.ideal.shape[0]
    dim = series.ideal.shape[-1]
    h = np.zeros((n_nodes, dim, dim), dtype=complex)
    for tr, frame in zip(trajs, series.frames.values()):
        if tr.values.size != n_nodes:
            raise ValueError("trajectory does not match the series grid")
        h += tr.values[:, None, None] * frame
    dt = series.grid.dt
    # powers of -i kept exact so trace parities are clean
    minus_i_pow = (-1j, -1.0 + 0j, 1j, 1.0 + 0j)
    terms = []
    k = _running_trapezoid(h, dt)
    terms.append(minus_i_pow[0] * k[-1])
    for q in range(2, q_max + 1):
        k = _running_trapezoid(np.matmul(h, k), dt)
        terms.append(minus_i_pow[(q - 1) % 4] * k[-1])
    return DysonTerms(tuple(terms))
