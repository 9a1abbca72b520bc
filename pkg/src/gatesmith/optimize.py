"""Two-stage derivative-free pulse search.

Stage one minimizes the noise-free infidelity alone from many random
coefficient vectors, producing an ensemble of pulses that all implement the
target gate.  Stage two restarts from randomly chosen ensemble members and
minimizes the noise-free infidelity plus a noise term whose form depends on
the strategy:

* ``idg``  keeps the best stage-one pulse unchanged (no noise term),
* ``qsn``  averages against the correlation kernels frozen at zero lag rate,
* ``tvn``  averages against the true correlation kernels,
* ``ftf``  integrates each channel's filter function over a frequency window.

Whatever the strategy optimized, the returned breakdown is always scored
under the true correlation models, so strategies can be compared fairly.

Every random draw (starts, restarts, ensemble selection) comes from a
counter-based generator keyed by the master seed and the start index, so
results are identical for any degree of parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .cost import (
    CostBreakdown,
    avg_noise_infidelity,
    higher_order_ratios,
    ideal_infidelity,
    infidelity,
)
from .model import (
    CorrelationSpec,
    NoiseChannel,
    OUCorrelation,
    QuasiStaticCorrelation,
    SystemModel,
    TargetGate,
    correlation,
    lag_kernel,
)
from .propagate import TimeGrid, ideal_final, ideal_series
from .spectral import FtfWindow, traceless_rows, weight_from_rows

__all__ = [
    "OptimizerConfig",
    "OptimizationError",
    "Strategy",
    "NMResult",
    "StageResult",
    "OptimizationRun",
    "nelder_mead",
    "repeating_nm",
    "simplex_anneal",
    "stage1_search",
    "stage2_refine",
    "parameter_layout",
    "pack_parameters",
    "apply_parameters",
    "quasi_static_variant",
    "CostEvaluator",
    "evaluate_breakdown",
]

STRATEGY_KINDS = ("idg", "qsn", "tvn", "ftf")

# spawn-key namespaces; trajectory seeds use (channel index, realization), so
# optimizer streams start far above any plausible channel count
_STAGE1_STREAM = 101
_STAGE2_STREAM = 102
_PICK_STREAM = 103


class OptimizationError(RuntimeError):
    """Search aborted; carries the last simplex for post-mortems."""

    def __init__(self, message: str, simplex=None, values=None):
        super().__init__(message)
        self.simplex = simplex
        self.values = values


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters of the simplex search and its staging.

    The defaults reproduce the standard reflective simplex with coefficients
    (1, 2, 0.5, 0.5); `perturbation_scale` and `perturbation_floor` shape the
    Gaussian restarts of the stage-two repeat loop.
    """

    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    simplex_scale: float = 0.1
    stage1_tol: float = 1e-12
    stage2_rel_tol: float = 1e-10
    max_evals: int = 50_000
    repeat_rounds: int = 10
    kicks_per_round: int = 1
    perturbation_scale: float = 0.2
    perturbation_floor: float = 0.01
    polish_rungs: tuple = (3e-3, 3e-4, 3e-5, 3e-6)
    polish_evals: int = 2000
    stage1_starts: int = 100
    stage2_starts: int = 10
    seed: int = 1234

    def __post_init__(self):
        if self.reflection <= 0.0:
            raise ValueError("reflection must be positive")
        if self.expansion <= max(1.0, self.reflection):
            raise ValueError("expansion must exceed 1 and the reflection coefficient")
        if not (0.0 < self.contraction < 1.0):
            raise ValueError("contraction must lie in (0, 1)")
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink must lie in (0, 1)")
        if self.simplex_scale <= 0.0:
            raise ValueError("simplex_scale must be positive")
        if self.stage1_tol < 0.0 or self.stage2_rel_tol < 0.0:
            raise ValueError("tolerances must be non-negative")
        if self.max_evals < 10:
            raise ValueError("max_evals too small to do anything")
        if self.repeat_rounds < 0:
            raise ValueError("repeat_rounds must be >= 0")
        if self.kicks_per_round < 1:
            raise ValueError("kicks_per_round must be >= 1")
        if self.perturbation_scale < 0.0 or self.perturbation_floor < 0.0:
            raise ValueError("perturbation parameters must be non-negative")
        object.__setattr__(self, "polish_rungs", tuple(self.polish_rungs))
        if any(s <= 0.0 for s in self.polish_rungs):
            raise ValueError("polish rungs must be positive")
        if self.polish_evals != 0 and self.polish_evals < 10:
            raise ValueError("polish_evals too small to do anything (0 disables polish)")
        if self.stage1_starts < 1 or self.stage2_starts < 1:
            raise ValueError("need at least one start per stage")


@dataclass(frozen=True)
class Strategy:
    """Noise-handling mode of stage two, plus FTF windows when relevant."""

    kind: str
    windows: Optional[dict[str, FtfWindow]] = None
    window_points: int = 257

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"strategy must be one of {STRATEGY_KINDS}")
        if self.kind == "ftf" and not self.windows:
            raise ValueError("ftf strategy needs a frequency window per noise channel")


@dataclass(frozen=True, eq=False)
class NMResult:
    x: np.ndarray
    cost: float
    n_evals: int
    trace: tuple
    converged: bool


@dataclass(frozen=True, eq=False)
class StageResult:
    """Outcome of one optimization start."""

    x: Optional[np.ndarray]
    cost: float
    start_index: int
    n_evals: int
    trace: tuple
    converged: bool
    error: str = ""


@dataclass(frozen=True, eq=False)
class OptimizationRun:
    """Best pulse of a strategy with its provenance and fair-scored breakdown."""

    strategy: str
    x: np.ndarray
    parameters: dict
    cost: float
    trace: tuple
    breakdown: CostBreakdown
    seed: int
    stage1_index: int
    n_evals: int


# ---------------------------------------------------------------------------
# parameter packing


@dataclass(frozen=True)
class _ChannelSlot:
    label: str
    coeff_slice: slice
    offset_index: Optional[int]


@dataclass(frozen=True)
class ParameterLayout:
    slots: tuple[_ChannelSlot, ...]
    size: int


def parameter_layout(model: SystemModel) -> ParameterLayout:
    """Flat-vector layout: each control's sine coefficients, then its offset."""
    slots = []
    pos = 0
    for ch in model.controls:
        k = ch.pulse.coefficients.size
        coeff_slice = slice(pos, pos + k)
        pos += k
        offset_index = None
        if ch.optimize_offset:
            offset_index = pos
            pos += 1
        slots.append(_ChannelSlot(ch.label, coeff_slice, offset_index))
    return ParameterLayout(tuple(slots), pos)


def pack_parameters(model: SystemModel, layout: Optional[ParameterLayout] = None) -> np.ndarray:
    layout = layout or parameter_layout(model)
    x = np.empty(layout.size)
    for ch, slot in zip(model.controls, layout.slots):
        x[slot.coeff_slice] = ch.pulse.coefficients
        if slot.offset_index is not None:
            x[slot.offset_index] = ch.pulse.constant_offset
    return x


def apply_parameters(
    model: SystemModel, x: np.ndarray, layout: Optional[ParameterLayout] = None
) -> SystemModel:
    layout = layout or parameter_layout(model)
    if x.size != layout.size:
        raise ValueError(f"parameter vector has size {x.size}, expected {layout.size}")
    pulses = {}
    for ch, slot in zip(model.controls, layout.slots):
        offset = x[slot.offset_index] if slot.offset_index is not None else ch.pulse.constant_offset
        pulses[ch.label] = replace(
            ch.pulse, coefficients=x[slot.coeff_slice].copy(), constant_offset=float(offset)
        )
    return model.with_pulses(pulses)


# ---------------------------------------------------------------------------
# simplex search


def _initial_simplex(start: np.ndarray, scale: float) -> np.ndarray:
    n = start.size
    simplex = np.tile(start, (n + 1, 1))
    for i in range(n):
        # fraction of the component magnitude, floored for near-zero entries
        simplex[i + 1, i] += scale * max(abs(start[i]), 0.1)
    return simplex


def nelder_mead(
    cost_fn: Callable[[np.ndarray], float],
    start: np.ndarray,
    cfg: OptimizerConfig,
    tol_abs: float = 0.0,
    tol_rel: float = 0.0,
    budget: Optional[int] = None,
    _eval_base: int = 0,
) -> NMResult:
    """Deterministic reflective simplex descent.

    Terminates when the simplex cost spread falls below
    tol_abs + tol_rel * |best| or the evaluation budget runs out.  A cost of
    NaN aborts immediately with the offending simplex attached.
    """
    start = np.asarray(start, dtype=float)
    if start.ndim != 1 or start.size < 1:
        raise ValueError("start must be a non-empty 1-D vector")
    budget = cfg.max_evals if budget is None else budget
    n = start.size
    simplex = _initial_simplex(start, cfg.simplex_scale)
    values = np.empty(n + 1)
    evals = 0
    trace: list[tuple[int, float]] = []
    best_seen = math.inf

    def evaluate(x: np.ndarray) -> float:
        nonlocal evals, best_seen
        v = float(cost_fn(x))
        evals += 1
        if math.isnan(v):
            raise OptimizationError(
                f"cost returned NaN after {evals} evaluations", simplex.copy(), values.copy()
            )
        if v < best_seen:
            best_seen = v
            trace.append((_eval_base + evals, v))
        return v

    for i in range(n + 1):
        values[i] = evaluate(simplex[i])

    converged = False
    while evals < budget:
        order = np.argsort(values, kind="stable")
        simplex = simplex[order]
        values = values[order]
        if values[-1] - values[0] <= tol_abs + tol_rel * abs(values[0]):
            converged = True
            break

        centroid = simplex[:-1].mean(axis=0)
        reflected = centroid + cfg.reflection * (centroid - simplex[-1])
        f_r = evaluate(reflected)
        if f_r < values[0]:
            expanded = centroid + cfg.expansion * (reflected - centroid)
            f_e = evaluate(expanded)
            if f_e < f_r:
                simplex[-1], values[-1] = expanded, f_e
            else:
                simplex[-1], values[-1] = reflected, f_r
        elif f_r < values[-2]:
            simplex[-1], values[-1] = reflected, f_r
        else:
            if f_r < values[-1]:
                contracted = centroid + cfg.contraction * (reflected - centroid)
                f_c = evaluate(contracted)
                accept = f_c <= f_r
            else:
                contracted = centroid - cfg.contraction * (centroid - simplex[-1])
                f_c = evaluate(contracted)
                accept = f_c < values[-1]
            if accept:
                simplex[-1], values[-1] = contracted, f_c
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + cfg.shrink * (simplex[i] - simplex[0])
                    values[i] = evaluate(simplex[i])

    order = np.argsort(values, kind="stable")
    best = int(order[0])
    return NMResult(simplex[best].copy(), float(values[best]), evals, tuple(trace), converged)


def repeating_nm(
    cost_fn: Callable[[np.ndarray], float],
    start: np.ndarray,
    cfg: OptimizerConfig,
    rng: np.random.Generator,
    tol_abs: float = 0.0,
    tol_rel: float = 0.0,
) -> NMResult:
    """Simplex descent with Gaussian restart kicks.

    After the first descent, each of up to `repeat_rounds` rounds fires
    `kicks_per_round` perturbations of the incumbent (component-wise stddev =
    perturbation_scale * max(|component|, perturbation_floor)), re-runs the
    descent from each, and keeps the best vector seen.  The loop ends early
    once an entire round yields no improvement.
    """
    best = nelder_mead(cost_fn, start, cfg, tol_abs, tol_rel)
    total_evals = best.n_evals
    trace = list(best.trace)
    converged = best.converged
    for _ in range(cfg.repeat_rounds):
        improved = False
        for _ in range(cfg.kicks_per_round):
            stddev = cfg.perturbation_scale * np.maximum(np.abs(best.x), cfg.perturbation_floor)
            kicked = best.x + rng.normal(size=best.x.size) * stddev
            trial = nelder_mead(
                cost_fn, kicked, cfg, tol_abs, tol_rel, _eval_base=total_evals
            )
            total_evals += trial.n_evals
            if trial.cost < best.cost:
                trace.extend(t for t in trial.trace if t[1] < best.cost)
                best = trial
                converged = trial.converged
                improved = True
        if not improved:
            break
    return NMResult(best.x, best.cost, total_evals, tuple(trace), converged)


def simplex_anneal(
    cost_fn: Callable[[np.ndarray], float],
    incumbent: NMResult,
    cfg: OptimizerConfig,
    tol_abs: float = 0.0,
    tol_rel: float = 0.0,
) -> NMResult:
    """Re-descend from the incumbent with progressively finer simplexes.

    A restart simplex built at `simplex_scale` is orders of magnitude coarser
    than a deep basin, so a descent that stalls near its floor spends the rest
    of its budget re-contracting.  Each rung here rebuilds the simplex at the
    next scale in `polish_rungs` and keeps the better vector; near a genuine
    local minimum the cost saturates to several digits across the last rungs.
    `polish_evals = 0` disables the phase.
    """
    if cfg.polish_evals == 0 or not cfg.polish_rungs:
        return incumbent
    best = incumbent
    evals = incumbent.n_evals
    trace = list(incumbent.trace)
    converged = incumbent.converged
    for scale in cfg.polish_rungs:
        sub = replace(cfg, simplex_scale=scale, max_evals=cfg.polish_evals)
        trial = nelder_mead(cost_fn, best.x, sub, tol_abs, tol_rel, _eval_base=evals)
        evals += trial.n_evals
        if trial.cost < best.cost:
            trace.extend(t for t in trial.trace if t[1] < best.cost)
            best = trial
            converged = trial.converged
    return NMResult(best.x, best.cost, evals, tuple(trace), converged)


# ---------------------------------------------------------------------------
# strategy costs


def quasi_static_variant(spec: CorrelationSpec) -> QuasiStaticCorrelation:
    """Zero-lag-rate stand-in with the same equal-time variance."""
    if isinstance(spec, QuasiStaticCorrelation):
        return spec
    if isinstance(spec, OUCorrelation):
        return QuasiStaticCorrelation(spec.sigma)
    return QuasiStaticCorrelation(math.sqrt(max(correlation(spec, 0.0, 0.0), 0.0)))


def _strategy_noises(strategy_kind: str, noises: tuple[NoiseChannel, ...]):
    if strategy_kind == "qsn":
        return tuple(replace(nz, correlation=quasi_static_variant(nz.correlation)) for nz in noises)
    return noises


class CostEvaluator:
    """Picklable cost of one strategy for a fixed model, target, and grid."""

    def __init__(
        self,
        strategy: Strategy,
        model: SystemModel,
        target: TargetGate,
        grid: TimeGrid,
        ideal_only: bool = False,
    ):
        self.strategy = strategy
        self.model = model
        self.target = target
        self.grid = grid
        self.ideal_only = ideal_only
        self.layout = parameter_layout(model)
        self._kernels = None
        self._windows = None
        if not ideal_only and strategy.kind in ("qsn", "tvn"):
            noises = _strategy_noises(strategy.kind, model.noises)
            self._kernels = {
                nz.label: lag_kernel(nz.correlation, grid.dt, grid.n_steps) for nz in noises
            }
            self._noises = noises
        elif not ideal_only and strategy.kind == "ftf":
            self._windows = {}
            for nz in model.noises:
                win = strategy.windows[nz.label]
                self._windows[nz.label] = np.linspace(win.low, win.high, strategy.window_points)

    def __call__(self, x: np.ndarray) -> float:
        candidate = apply_parameters(self.model, x, self.layout)
        if self.ideal_only or self.strategy.kind == "idg":
            return infidelity(ideal_final(candidate, self.grid), self.target)
        series = ideal_series(candidate, self.grid, validate=False)
        value = ideal_infidelity(series, self.target)
        if self._kernels is not None:
            value += avg_noise_infidelity(series, self._noises, kernels=self._kernels)
        else:
            times = self.grid.times
            for label, omega in self._windows.items():
                rows = traceless_rows(series, label)
                weight = weight_from_rows(rows, times, omega)
                value += float(np.trapezoid(omega**2 * weight, omega))
        return value


# ---------------------------------------------------------------------------
# staging


def _start_rng(seed: int, stage: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stage, index)))
    )


def _sample_start(
    model: SystemModel,
    layout: ParameterLayout,
    rng: np.random.Generator,
    coeff_ranges: Optional[dict],
    offset_ranges: Optional[dict],
) -> np.ndarray:
    default_coeff = (-1.0, 1.0) if model.n_qubits == 1 else (-0.5, 0.5)
    default_offset = (0.0, 0.5)
    x = np.empty(layout.size)
    for slot in layout.slots:
        lo, hi = (coeff_ranges or {}).get(slot.label, default_coeff)
        k = slot.coeff_slice.stop - slot.coeff_slice.start
        x[slot.coeff_slice] = rng.uniform(lo, hi, size=k)
        if slot.offset_index is not None:
            lo, hi = (offset_ranges or {}).get(slot.label, default_offset)
            x[slot.offset_index] = rng.uniform(lo, hi)
    return x


def _stage1_task(payload) -> StageResult:
    model, target, grid, cfg, coeff_ranges, offset_ranges, index = payload
    layout = parameter_layout(model)
    rng = _start_rng(cfg.seed, _STAGE1_STREAM, index)
    x0 = _sample_start(model, layout, rng, coeff_ranges, offset_ranges)
    evaluator = CostEvaluator(Strategy("idg"), model, target, grid, ideal_only=True)
    try:
        res = nelder_mead(evaluator, x0, cfg, tol_abs=cfg.stage1_tol)
    except OptimizationError as exc:
        return StageResult(None, math.inf, index, 0, (), False, str(exc))
    return StageResult(res.x, res.cost, index, res.n_evals, res.trace, res.converged)


def stage1_search(
    model: SystemModel,
    target: TargetGate,
    grid: TimeGrid,
    cfg: OptimizerConfig,
    coeff_ranges: Optional[dict] = None,
    offset_ranges: Optional[dict] = None,
    parallelism: int = 1,
) -> list[StageResult]:
    """Noise-free infidelity descent from `stage1_starts` random vectors.

    Returns every start's outcome sorted by cost; aborted starts come last
    with an attached error message.  Results do not depend on `parallelism`.
    """
    if not model.controls:
        raise ValueError("model has no control channels to optimize")
    payloads = [
        (model, target, grid, cfg, coeff_ranges, offset_ranges, i)
        for i in range(cfg.stage1_starts)
    ]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_stage1_task, payloads))
    else:
        results = [_stage1_task(p) for p in payloads]
    return sorted(results, key=lambda r: (r.cost, r.start_index))


def _stage2_task(payload) -> tuple[int, NMResult]:
    strategy, model, target, grid, cfg, x0, ensemble_index = payload
    evaluator = CostEvaluator(strategy, model, target, grid)
    rng = _start_rng(cfg.seed, _STAGE2_STREAM, ensemble_index)
    res = repeating_nm(evaluator, x0, cfg, rng, tol_rel=cfg.stage2_rel_tol)
    res = simplex_anneal(evaluator, res, cfg, tol_rel=cfg.stage2_rel_tol)
    return ensemble_index, res


def evaluate_breakdown(
    model: SystemModel,
    target: TargetGate,
    grid: TimeGrid,
    x: Optional[np.ndarray] = None,
) -> CostBreakdown:
    """Score a parameter vector under the model's true correlation specs."""
    candidate = model if x is None else apply_parameters(model, x)
    series = ideal_series(candidate, grid)
    sigma_max = max((nz.correlation.sigma for nz in model.noises), default=0.0)
    r3, r4 = higher_order_ratios(grid.gate_time, sigma_max)
    return CostBreakdown(
        ideal_infidelity=ideal_infidelity(series, target),
        noise_average=avg_noise_infidelity(series, model.noises) if model.noises else 0.0,
        third_order_ratio=r3,
        fourth_order_ratio=r4,
    )


def _pulse_dicts(model: SystemModel, x: np.ndarray) -> dict:
    applied = apply_parameters(model, x)
    out = {}
    for ch in applied.controls:
        out[ch.label] = {
            "coefficients": [float(c) for c in ch.pulse.coefficients],
            "harmonics": [int(m) for m in ch.pulse.harmonics],
            "constant_offset": float(ch.pulse.constant_offset),
        }
    return out


def stage2_refine(
    strategy: Strategy,
    model: SystemModel,
    target: TargetGate,
    grid: TimeGrid,
    ensemble: list[StageResult],
    cfg: OptimizerConfig,
    parallelism: int = 1,
) -> OptimizationRun:
    """Noise-aware refinement of randomly chosen stage-one pulses.

    Each start runs the kicked simplex search and then a fine-simplex polish.
    `idg` skips refinement and promotes the best ensemble member directly.
    The returned breakdown is always evaluated under the model's true
    correlation specs, whatever cost the strategy itself minimized.
    """
    usable = [r for r in ensemble if r.x is not None and math.isfinite(r.cost)]
    if not usable:
        raise OptimizationError("no usable stage-one results")

    if strategy.kind == "idg":
        best = usable[0]
        return OptimizationRun(
            strategy=strategy.kind,
            x=best.x,
            parameters=_pulse_dicts(model, best.x),
            cost=best.cost,
            trace=best.trace,
            breakdown=evaluate_breakdown(model, target, grid, best.x),
            seed=cfg.seed,
            stage1_index=best.start_index,
            n_evals=best.n_evals,
        )

    picker = _start_rng(cfg.seed, _PICK_STREAM, 0)
    n_picks = min(cfg.stage2_starts, len(usable))
    picked = picker.choice(len(usable), size=n_picks, replace=False)
    payloads = [
        (strategy, model, target, grid, cfg, usable[int(i)].x, usable[int(i)].start_index)
        for i in sorted(int(i) for i in picked)
    ]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_stage2_task, payloads))
    else:
        outcomes = [_stage2_task(p) for p in payloads]

    best_index, best = min(outcomes, key=lambda pair: (pair[1].cost, pair[0]))
    total_evals = sum(res.n_evals for _, res in outcomes)
    return OptimizationRun(
        strategy=strategy.kind,
        x=best.x,
        parameters=_pulse_dicts(model, best.x),
        cost=best.cost,
        trace=best.trace,
        breakdown=evaluate_breakdown(model, target, grid, best.x),
        seed=cfg.seed,
        stage1_index=best_index,
        n_evals=total_evals,
    )
