"""Shared fixtures: small models, targets, and one cheaply tuned pulse."""

from __future__ import annotations

import numpy as np
import pytest

from gatesmith import (
    NoiseChannel,
    OptimizerConfig,
    OUCorrelation,
    QuasiStaticCorrelation,
    StaticCoupling,
    Strategy,
    TimeGrid,
    named_gate,
    single_qubit_model,
    stage1_search,
    stage2_refine,
)
from gatesmith.operators import PAULI_Z


def dephasing_channel(sigma=1e-3, gamma=None, label="Z"):
    corr = QuasiStaticCorrelation(sigma) if gamma is None else OUCorrelation(sigma, gamma)
    return NoiseChannel(label=label, coupling=StaticCoupling(PAULI_Z / 2.0), correlation=corr)


def dephasing_model(sigma=1e-3, gamma=None, **kwargs):
    kwargs.setdefault("k_max", 8)
    return single_qubit_model(noises=(dephasing_channel(sigma, gamma),), **kwargs)


@pytest.fixture(scope="session")
def hadamard():
    return named_gate("hadamard")


@pytest.fixture(scope="session")
def small_grid():
    return TimeGrid(20.0, 400)


@pytest.fixture(scope="session")
def tuned_hadamard(hadamard):
    """A Hadamard pulse tuned to low ideal infidelity on a coarse grid.

    One short two-stage run; shared by tests that need a realistic
    near-optimal pulse without paying for a full optimization.
    """
    grid = TimeGrid(20.0, 400)
    model = dephasing_model(sigma=1e-3, gamma=1e-1)
    cfg = OptimizerConfig(
        stage1_starts=6, stage2_starts=1, repeat_rounds=1, max_evals=12_000, seed=7
    )
    ensemble = stage1_search(model, hadamard, grid, cfg)
    run = stage2_refine(Strategy("idg"), model, hadamard, grid, ensemble, cfg)
    return {"model": model, "grid": grid, "run": run}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
