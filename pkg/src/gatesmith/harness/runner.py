"""Monte Carlo verification, sigma sweeps, and the experiment pipeline.

The Monte Carlo estimator propagates the full noisy Hamiltonian, with no
perturbative truncation, over many independently seeded realizations.
Realizations are processed in fixed-size chunks; each trajectory's seed is
derived from (master seed, channel index, realization index), so the
estimate is identical for any chunking or degree of parallelism.
"""

from __future__ import annotations

import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .. import __version__
from ..cost import avg_noise_infidelity, ideal_infidelity, infidelity_batch
from ..model import (
    NoiseChannel,
    OUCorrelation,
    QuasiStaticCorrelation,
    SystemModel,
    TargetGate,
)
from ..noise import simulate_channel_batch
from ..optimize import (
    OptimizationRun,
    Strategy,
    apply_parameters,
    stage1_search,
    stage2_refine,
)
from ..propagate import TimeGrid, ideal_final, ideal_series, noisy_final_batch
from ..spectral import default_frequency_grid, filter_functions
from .config import Experiment, build_experiment, load_config
from . import report as report_mod

__all__ = [
    "SweepResult",
    "ExperimentError",
    "monte_carlo_infidelity",
    "infidelity_samples",
    "sigma_sweep",
    "run_experiment",
    "scale_noise_sigmas",
]

_GENERABLE = (OUCorrelation, QuasiStaticCorrelation)


class ExperimentError(RuntimeError):
    """Pipeline failure; an error report has been written to the run directory."""


def _require_generable(noises) -> None:
    bad = [nz.label for nz in noises if not isinstance(nz.correlation, _GENERABLE)]
    if bad:
        raise ValueError(
            f"channels {bad} have no trajectory generator; Monte Carlo needs ou or "
            "quasi_static noise. For other spectra use the frequency-domain average "
            "in the spectral module."
        )


def scale_noise_sigmas(model: SystemModel, multiplier: float) -> SystemModel:
    """Model with every channel's standard deviation scaled jointly."""
    scaled = tuple(
        replace(nz, correlation=replace(nz.correlation, sigma=nz.correlation.sigma * multiplier))
        for nz in model.noises
    )
    return replace(model, noises=scaled)


def _mc_chunk(payload) -> np.ndarray:
    model, target, grid, seed, indices = payload
    values = np.empty((len(indices), len(model.noises), grid.n_steps + 1))
    for c, nz in enumerate(model.noises):
        values[:, c, :] = simulate_channel_batch(
            nz.correlation, grid.dt, grid.n_steps, seed, c, indices
        )
    finals = noisy_final_batch(model, grid, values)
    return infidelity_batch(finals, target)


def infidelity_samples(
    model: SystemModel,
    target: TargetGate,
    grid: TimeGrid,
    n_realizations: int,
    seed: int,
    parallelism: int = 1,
    chunk_size: int = 250,
) -> np.ndarray:
    """Per-realization infidelities of the full noisy evolution, in index order."""
    _require_generable(model.noises)
    chunks = [
        np.arange(lo, min(lo + chunk_size, n_realizations))
        for lo in range(0, n_realizations, chunk_size)
    ]
    payloads = [(model, target, grid, seed, idx) for idx in chunks]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            parts = list(pool.map(_mc_chunk, payloads))
    else:
        parts = [_mc_chunk(p) for p in payloads]
    return np.concatenate(parts)


def monte_carlo_infidelity(
    model: SystemModel,
    target: TargetGate,
    grid: TimeGrid,
    n_realizations: int,
    seed: int,
    parallelism: int = 1,
    chunk_size: int = 250,
) -> tuple[float, float]:
    """Ensemble mean and standard error of the full-Hamiltonian infidelity.

    With every channel at zero standard deviation (or no channels at all)
    the evolution is deterministic and the noise-free infidelity is returned
    exactly, with zero standard error.
    """
    if n_realizations < 2:
        raise ValueError("need at least 2 realizations for a standard error")
    if not model.noises or all(nz.correlation.sigma == 0.0 for nz in model.noises):
        return infidelity_batch(ideal_final(model, grid)[None], target)[0].item(), 0.0
    samples = infidelity_samples(
        model, target, grid, n_realizations, seed, parallelism, chunk_size
    )
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(samples.size))
    return mean, stderr


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Noise-strength sweep with a log-log power-law fit.

    All channels are scaled jointly; `sigmas` is the multiplier times the
    largest base standard deviation.  `fit_mask` marks the points used for
    the slope; `flagged` lists indices excluded because the mean was not
    resolved above noise (mean < 3 stderr).
    """

    multipliers: tuple
    sigmas: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    n_realizations: int
    slope: float
    intercept: float
    fit_mask: np.ndarray
    flagged: tuple


def sigma_sweep(
    model: SystemModel,
    target: TargetGate,
    grid: TimeGrid,
    multipliers,
    n_realizations: int,
    seed: int,
    fit_window: Optional[tuple[float, float]] = None,
    parallelism: int = 1,
    chunk_size: int = 250,
) -> SweepResult:
    """Monte Carlo infidelity versus jointly scaled noise strength.

    Sweep points share the master seed, so realizations are common random
    numbers across points; the log-log slope is fit over `fit_window` (an
    absolute range on the sigma axis, defaulting to all points), excluding
    points whose mean is below three standard errors.
    """
    if not model.noises:
        raise ValueError("sweep needs at least one noise channel")
    _require_generable(model.noises)
    multipliers = tuple(float(m) for m in multipliers)
    if any(m <= 0 for m in multipliers):
        raise ValueError("multipliers must be positive")
    sigma_ref = max(nz.correlation.sigma for nz in model.noises)
    if sigma_ref <= 0:
        raise ValueError("all channels have zero base standard deviation")

    means = np.empty(len(multipliers))
    stderrs = np.empty(len(multipliers))
    for i, m in enumerate(multipliers):
        mean, stderr = monte_carlo_infidelity(
            scale_noise_sigmas(model, m), target, grid, n_realizations, seed,
            parallelism, chunk_size,
        )
        means[i] = mean
        stderrs[i] = stderr

    sigmas = sigma_ref * np.asarray(multipliers)
    lo, hi = fit_window if fit_window is not None else (sigmas.min(), sigmas.max())
    in_window = (sigmas >= lo) & (sigmas <= hi)
    resolved = means > 3.0 * stderrs
    fit_mask = in_window & resolved
    flagged = tuple(int(i) for i in np.nonzero(in_window & ~resolved)[0])
    if fit_mask.sum() < 4:
        raise ValueError(
            f"slope fit needs >= 4 resolved points in the window, have {int(fit_mask.sum())}"
        )
    slope, intercept = np.polyfit(np.log10(sigmas[fit_mask]), np.log10(means[fit_mask]), 1)
    return SweepResult(
        multipliers=multipliers,
        sigmas=sigmas,
        means=means,
        stderrs=stderrs,
        n_realizations=n_realizations,
        slope=float(slope),
        intercept=float(intercept),
        fit_mask=fit_mask,
        flagged=flagged,
    )


# ---------------------------------------------------------------------------
# pipeline


def _seed_lineage(exp: Experiment) -> dict:
    return {
        "master_seed": exp.seed,
        "stage1_start": "SeedSequence(master, spawn_key=(101, start_index))",
        "stage2_restarts": "SeedSequence(master, spawn_key=(102, stage1_index))",
        "stage2_selection": "SeedSequence(master, spawn_key=(103, 0))",
        "trajectory": "SeedSequence(master, spawn_key=(channel_index, realization_index))",
    }


def _run_stages(exp: Experiment, out: Path, parallelism: int) -> dict:
    doc: dict = {
        "schema": 1,
        "name": exp.name,
        "package_version": __version__,
        "seed": exp.seed,
        "parallelism": parallelism,
        "seed_lineage": _seed_lineage(exp),
        "config": exp.config,
        "strategies": {},
        "files": [],
    }
    files: list[str] = doc["files"]

    ensemble = stage1_search(
        exp.model, exp.target, exp.grid, exp.optimizer, parallelism=parallelism
    )
    usable = [r for r in ensemble if r.x is not None and math.isfinite(r.cost)]
    if not usable:
        raise RuntimeError("every stage-one start failed")
    doc["stage1"] = {
        "n_starts": len(ensemble),
        "n_failed": len(ensemble) - len(usable),
        "best_cost": usable[0].cost,
    }

    runs: dict[str, OptimizationRun] = {}
    for strategy in exp.strategies:
        run = stage2_refine(
            strategy, exp.model, exp.target, exp.grid, ensemble, exp.optimizer,
            parallelism=parallelism,
        )
        runs[strategy.kind] = run
        doc["strategies"][strategy.kind] = {
            "parameters": run.parameters,
            "cost": run.cost,
            "stage1_index": run.stage1_index,
            "n_evals": run.n_evals,
            "breakdown": run.breakdown.as_dict(),
        }

    for kind, run in runs.items():
        entry = doc["strategies"][kind]
        tuned = apply_parameters(exp.model, run.x)

        if "verify" in exp.pipeline:
            mean, stderr = monte_carlo_infidelity(
                tuned, exp.target, exp.grid, exp.mc_realizations, exp.seed,
                parallelism, exp.mc_chunk_size,
            )
            bd = replace(run.breakdown, mc_mean=mean, mc_stderr=stderr)
            entry["breakdown"] = bd.as_dict()
            entry["monte_carlo"] = {
                "mean_infidelity": mean,
                "stderr": stderr,
                "n_realizations": exp.mc_realizations,
            }

        if "sweep" in exp.pipeline:
            sweep = sigma_sweep(
                tuned, exp.target, exp.grid, exp.sweep_multipliers,
                exp.sweep_realizations, exp.seed, exp.sweep_fit_window,
                parallelism, exp.mc_chunk_size,
            )
            name = f"sweep_{kind}.csv"
            report_mod.write_sweep_csv(out / name, sweep)
            files.append(name)
            entry["sweep"] = {
                "csv": name,
                "slope": sweep.slope,
                "intercept": sweep.intercept,
                "excluded_points": list(sweep.flagged),
                "n_realizations": sweep.n_realizations,
            }

        if "filter" in exp.pipeline and exp.model.noises:
            series = ideal_series(tuned, exp.grid)
            omega = default_frequency_grid(
                [nz.correlation for nz in exp.model.noises],
                exp.grid.gate_time,
                n_points=exp.filter_points,
            )
            ff = filter_functions(series, exp.model.noises, omega)
            entry["filter"] = {"csv": {}}
            for nz in exp.model.noises:
                name = f"filter_{kind}_{nz.label}.csv"
                report_mod.write_filter_csv(out / name, ff, nz.label)
                files.append(name)
                entry["filter"]["csv"][nz.label] = name

    name = "costs.csv"
    report_mod.write_cost_table(out / name, doc["strategies"])
    files.append(name)

    if exp.figures:
        files.extend(report_mod.render_figures(out, exp, runs, doc))
    return doc


def run_experiment(
    config: Union[str, Path, dict],
    out_dir: Union[str, Path],
    seed: Optional[int] = None,
    strategy: Optional[str] = None,
    parallelism: int = 1,
) -> Path:
    """Execute a config's pipeline and write its artifacts to `out_dir`.

    `seed` and `strategy` override the config.  On failure an error.json
    with the exception chain is written to the run directory and
    ExperimentError is raised.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cfg = load_config(config)
        if seed is not None:
            cfg["seed"] = int(seed)
        if strategy is not None:
            cfg["strategies"] = [strategy]
        exp = build_experiment(cfg)
        report_mod.write_config_echo(out / "config.yaml", exp.config)
        doc = _run_stages(exp, out, parallelism)
        doc["files"].extend(["config.yaml", "report.json"])
        report_mod.write_report(out / "report.json", doc)
    except Exception as exc:
        payload = {
            "schema": 1,
            "error": type(exc).__name__,
            "message": str(exc),
            "traceback": traceback.format_exc(),
        }
        with open(out / "error.json", "w") as fh:
            json.dump(payload, fh, indent=2)
        raise ExperimentError(f"{type(exc).__name__}: {exc}") from exc
    return out
