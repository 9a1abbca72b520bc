"""Smooth-pulse synthesis for quantum gates under time-correlated noise.

The library finds sine-series control pulses that implement a target gate
while minimizing a perturbative, noise-averaged infidelity, and verifies the
result with Monte Carlo propagation of the full noisy Hamiltonian.
"""

from .cost import (
    CostBreakdown,
    ErrorShift,
    avg_noise_infidelity,
    cross_term_diagnostic,
    error_shift,
    fourth_order_term,
    higher_order_ratios,
    ideal_infidelity,
    infidelity,
    noise_average_breakdown,
    second_order_term,
    third_order_term,
)
from .model import (
    ControlChannel,
    MultiplicativeCoupling,
    NoiseChannel,
    OUCorrelation,
    PulseAnsatz,
    QuasiStaticCorrelation,
    StaticCoupling,
    SystemModel,
    TabulatedPSDCorrelation,
    TargetGate,
    TwoPeakCorrelation,
    correlation,
    lag_kernel,
    named_gate,
    single_qubit_model,
    two_qubit_model,
)
from .noise import (
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
)
from .optimize import (
    OptimizationRun,
    OptimizerConfig,
    Strategy,
    apply_parameters,
    evaluate_breakdown,
    nelder_mead,
    pack_parameters,
    repeating_nm,
    stage1_search,
    stage2_refine,
)
from .propagate import (
    DysonTerms,
    PropagatorSeries,
    TimeGrid,
    dyson_terms,
    ideal_final,
    ideal_series,
    noisy_final_batch,
    noisy_propagator,
)
from .spectral import (
    FilterFunction,
    FtfWindow,
    avg_noise_infidelity_frequency,
    default_frequency_grid,
    filter_function,
    filter_functions,
    ftf_cost,
    psd_on_grid,
)

__version__ = "0.1.0"
