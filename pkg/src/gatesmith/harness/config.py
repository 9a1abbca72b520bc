"""Experiment configs: schema, validation, builders, and the bundled catalog.

A config is a YAML/JSON document with a versioned `schema: 1` key.  It
declares the physical model, the target gate, the time grid, the strategies
to optimize, and the verification stages to run.  `load_config` accepts a
file path or the name of a bundled config; `build_experiment` turns a
validated document into live objects.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import jsonschema
import numpy as np
import yaml

from ..model import (
    MultiplicativeCoupling,
    NoiseChannel,
    OUCorrelation,
    QuasiStaticCorrelation,
    StaticCoupling,
    SystemModel,
    TabulatedPSDCorrelation,
    TargetGate,
    TwoPeakCorrelation,
    named_gate,
    single_qubit_model,
    two_qubit_model,
)
from ..operators import PAULI_I, PAULI_X, PAULI_Y, PAULI_Z, expm_hermitian, kron
from ..optimize import OptimizerConfig, Strategy
from ..propagate import TimeGrid
from ..spectral import FtfWindow

__all__ = [
    "SCHEMA_VERSION",
    "CONFIG_SCHEMA",
    "ConfigError",
    "Experiment",
    "load_config",
    "validate_config",
    "build_experiment",
    "parse_operator",
    "catalog_names",
    "catalog_config",
]

SCHEMA_VERSION = 1

PIPELINE_STAGES = ("optimize", "verify", "sweep", "filter")

_CORRELATION_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["ou", "quasi_static", "two_peak", "tabulated"]},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "gamma": {"type": "number", "exclusiveMinimum": 0},
        "omega": {"type": "array", "items": {"type": "number"}, "minItems": 2},
        "values": {"type": "array", "items": {"type": "number"}, "minItems": 2},
    },
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": "ou"}}},
            "then": {"required": ["sigma", "gamma"]},
        },
        {
            "if": {"properties": {"kind": {"const": "quasi_static"}}},
            "then": {"required": ["sigma"]},
        },
        {
            "if": {"properties": {"kind": {"const": "two_peak"}}},
            "then": {"required": ["sigma", "gamma"]},
        },
        {
            "if": {"properties": {"kind": {"const": "tabulated"}}},
            "then": {"required": ["omega", "values"]},
        },
    ],
}

_NOISE_SCHEMA = {
    "type": "object",
    "required": ["label", "operator", "correlation"],
    "additionalProperties": False,
    "properties": {
        "label": {"type": "string", "minLength": 1},
        "operator": {"type": "string", "minLength": 1},
        "coupling": {
            "oneOf": [
                {"const": "additive"},
                {
                    "type": "object",
                    "required": ["multiplicative"],
                    "additionalProperties": False,
                    "properties": {"multiplicative": {"type": "string"}},
                },
            ]
        },
        "correlation": _CORRELATION_SCHEMA,
    },
}

_MODEL_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["single_qubit", "two_qubit"]},
        "gate_time": {"type": "number", "exclusiveMinimum": 0},
        "drift_prefactor": {"type": "number"},
        "controls": {
            "type": "array",
            "items": {"enum": ["X", "Y"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "k_max": {"type": "integer", "minimum": 1, "maximum": 64},
        "k_max_drive": {"type": "integer", "minimum": 1, "maximum": 64},
        "k_max_coupling": {"type": "integer", "minimum": 1, "maximum": 64},
        "noises": {"type": "array", "items": _NOISE_SCHEMA},
    },
}

_WINDOW_SCHEMA = {
    "type": "object",
    "required": ["low", "high"],
    "additionalProperties": False,
    "properties": {
        "low": {"type": "number", "minimum": 0},
        "high": {"type": "number", "exclusiveMinimum": 0},
        "points": {"type": "integer", "minimum": 16},
    },
}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema", "model", "target"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "long_running": {"type": "boolean"},
        "model": _MODEL_SCHEMA,
        "target": {
            "oneOf": [
                {"type": "string", "minLength": 1},
                {
                    "type": "object",
                    "required": ["matrix"],
                    "additionalProperties": False,
                    "properties": {
                        "matrix": {
                            "type": "array",
                            "minItems": 2,
                            "items": {
                                "type": "array",
                                "minItems": 2,
                                "items": {
                                    "type": "array",
                                    "minItems": 2,
                                    "maxItems": 2,
                                    "items": {"type": "number"},
                                },
                            },
                        }
                    },
                },
            ]
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_steps": {"type": "integer", "minimum": 100}},
        },
        "strategies": {
            "type": "array",
            "items": {"enum": ["idg", "qsn", "tvn", "ftf"]},
            "minItems": 1,
            "uniqueItems": True,
        },
        "ftf_windows": {
            "type": "object",
            "additionalProperties": _WINDOW_SCHEMA,
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "stage1_starts": {"type": "integer", "minimum": 1},
                "stage2_starts": {"type": "integer", "minimum": 1},
                "max_evals": {"type": "integer", "minimum": 10},
                "repeat_rounds": {"type": "integer", "minimum": 0},
                "kicks_per_round": {"type": "integer", "minimum": 1},
                "simplex_scale": {"type": "number", "exclusiveMinimum": 0},
                "stage1_tol": {"type": "number", "minimum": 0},
                "stage2_rel_tol": {"type": "number", "minimum": 0},
                "perturbation_scale": {"type": "number", "minimum": 0},
                "perturbation_floor": {"type": "number", "minimum": 0},
                "polish_rungs": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                },
                "polish_evals": {"type": "integer", "minimum": 0},
            },
        },
        "monte_carlo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_realizations": {"type": "integer", "minimum": 2},
                "chunk_size": {"type": "integer", "minimum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "required": ["multipliers"],
            "additionalProperties": False,
            "properties": {
                "multipliers": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 2,
                },
                "n_realizations": {"type": "integer", "minimum": 2},
                "fit_window": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
        "filter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_points": {"type": "integer", "minimum": 64}},
        },
        "pipeline": {
            "type": "array",
            "items": {"enum": list(PIPELINE_STAGES)},
            "minItems": 1,
            "uniqueItems": True,
        },
        "seed": {"type": "integer", "minimum": 0},
        "report": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"figures": {"type": "boolean"}},
        },
    },
}


class ConfigError(ValueError):
    """Config rejected before any compute."""


def _default_pipeline(cfg: dict) -> list[str]:
    """Stages implied by the config: verify/sweep only where they can run."""
    noises = cfg["model"].get("noises", [])
    generable = noises and all(
        nd["correlation"]["kind"] in ("ou", "quasi_static") for nd in noises
    )
    stages = ["optimize"]
    if generable:
        stages.append("verify")
    if generable and "sweep" in cfg:
        stages.append("sweep")
    if noises:
        stages.append("filter")
    return stages


_SITE_TOKEN = re.compile(r"([IXYZ])([12])")
_PAULI = {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


def parse_operator(token: str, n_qubits: int) -> np.ndarray:
    """Hermitian operator from a token like "Z/2", "X1", or "Z1Z2/2".

    Single-qubit tokens are bare Pauli letters; two-qubit tokens are
    letter+site groups multiplied together.  A trailing "/2" halves the
    result (the conventional coupling normalization).
    """
    text = token.strip()
    halve = text.endswith("/2")
    if halve:
        text = text[:-2]
    if n_qubits == 1:
        if text not in _PAULI:
            raise ConfigError(f"bad single-qubit operator token {token!r}")
        op = _PAULI[text].copy()
    else:
        groups = _SITE_TOKEN.findall(text)
        if not groups or "".join(f"{p}{s}" for p, s in groups) != text:
            raise ConfigError(f"bad two-qubit operator token {token!r}")
        sites = {"1": PAULI_I, "2": PAULI_I}
        for pauli, site in groups:
            sites[site] = sites[site] @ _PAULI[pauli]
        op = kron(sites["1"], sites["2"])
    return op / 2.0 if halve else op


def _build_correlation(doc: dict):
    kind = doc["kind"]
    if kind == "ou":
        return OUCorrelation(doc["sigma"], doc["gamma"])
    if kind == "quasi_static":
        return QuasiStaticCorrelation(doc["sigma"])
    if kind == "two_peak":
        return TwoPeakCorrelation(doc["sigma"], doc["gamma"])
    return TabulatedPSDCorrelation(np.asarray(doc["omega"], dtype=float), np.asarray(doc["values"], dtype=float))


def _build_noise(doc: dict, n_qubits: int) -> NoiseChannel:
    op = parse_operator(doc["operator"], n_qubits)
    coupling_doc = doc.get("coupling", "additive")
    if coupling_doc == "additive":
        coupling = StaticCoupling(op)
    else:
        coupling = MultiplicativeCoupling(coupling_doc["multiplicative"])
    return NoiseChannel(doc["label"], coupling, _build_correlation(doc["correlation"]))


def _build_model(doc: dict) -> SystemModel:
    kind = doc["kind"]
    if kind == "single_qubit":
        gate_time = doc.get("gate_time", 20.0)
        noises = tuple(_build_noise(nd, 1) for nd in doc.get("noises", []))
        return single_qubit_model(
            gate_time=gate_time,
            k_max=doc.get("k_max", 10),
            controls=tuple(doc.get("controls", ["X"])),
            noises=noises,
            drift_prefactor=doc.get("drift_prefactor", 1.0),
        )
    gate_time = doc.get("gate_time", 100.0)
    noises = tuple(_build_noise(nd, 2) for nd in doc.get("noises", []))
    return two_qubit_model(
        gate_time=gate_time,
        k_max_drive=doc.get("k_max_drive", 16),
        k_max_coupling=doc.get("k_max_coupling", 8),
        noises=noises,
        drift_prefactor=doc.get("drift_prefactor", 1.0),
    )


def _build_target(doc, model: SystemModel, gate_time: float) -> TargetGate:
    if isinstance(doc, str):
        if doc == "free_evolution":
            return TargetGate(expm_hermitian(model.drift, -1j * gate_time), "free_evolution")
        return named_gate(doc)
    rows = doc["matrix"]
    mat = np.array([[complex(re_, im_) for re_, im_ in row] for row in rows])
    return TargetGate(mat, "custom")


@dataclass(frozen=True, eq=False)
class Experiment:
    """Validated config materialized into live objects."""

    name: str
    config: dict
    model: SystemModel
    target: TargetGate
    grid: TimeGrid
    strategies: tuple[Strategy, ...]
    optimizer: OptimizerConfig
    pipeline: tuple[str, ...]
    mc_realizations: int
    mc_chunk_size: int
    sweep_multipliers: Optional[tuple[float, ...]]
    sweep_realizations: int
    sweep_fit_window: Optional[tuple[float, float]]
    filter_points: int
    figures: bool
    seed: int


def validate_config(cfg: dict) -> dict:
    """Schema plus semantic checks; returns a deep copy, never mutates."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config schema violation at {path}: {exc.message}") from None
    cfg = copy.deepcopy(cfg)

    model_doc = cfg["model"]
    n_qubits = 1 if model_doc["kind"] == "single_qubit" else 2
    if n_qubits == 2 and ("controls" in model_doc or "k_max" in model_doc):
        raise ConfigError("controls/k_max apply to single_qubit models only")
    if n_qubits == 1 and ("k_max_drive" in model_doc or "k_max_coupling" in model_doc):
        raise ConfigError("k_max_drive/k_max_coupling apply to two_qubit models only")

    labels = [nd["label"] for nd in model_doc.get("noises", [])]
    if len(set(labels)) != len(labels):
        raise ConfigError("noise labels must be unique")
    for nd in model_doc.get("noises", []):
        parse_operator(nd["operator"], n_qubits)
        coupling = nd.get("coupling", "additive")
        if coupling != "additive":
            ref = coupling["multiplicative"]
            known = list(model_doc.get("controls", ["X"])) if n_qubits == 1 else ["X1", "X2", "J"]
            if ref not in known:
                raise ConfigError(f"multiplicative coupling references unknown control {ref!r}")
        kind = nd["correlation"]["kind"]
        if kind == "tabulated" and len(nd["correlation"]["omega"]) != len(nd["correlation"]["values"]):
            raise ConfigError(f"noise {nd['label']!r}: omega and values lengths differ")

    strategies = cfg.get("strategies", ["tvn"])
    if "ftf" in strategies:
        windows = cfg.get("ftf_windows", {})
        missing = [lb for lb in labels if lb not in windows]
        if missing:
            raise ConfigError(f"ftf strategy needs ftf_windows for {missing}")
        for lb, win in windows.items():
            if win["low"] >= win["high"]:
                raise ConfigError(f"ftf window for {lb!r} has low >= high")

    pipeline = cfg.get("pipeline", _default_pipeline(cfg))
    generable = all(
        nd["correlation"]["kind"] in ("ou", "quasi_static") for nd in model_doc.get("noises", [])
    )
    if not generable and ("verify" in pipeline or "sweep" in pipeline):
        raise ConfigError(
            "verify/sweep need trajectory-generable noise (ou or quasi_static); "
            "two_peak and tabulated spectra support only the filter stage"
        )
    if "sweep" in pipeline and "sweep" not in cfg:
        raise ConfigError("pipeline includes sweep but no sweep section is configured")
    if ("verify" in pipeline or "sweep" in pipeline) and not labels:
        raise ConfigError("verify/sweep need at least one noise channel")
    sweep = cfg.get("sweep")
    if sweep is not None:
        if "fit_window" in sweep and sweep["fit_window"][0] >= sweep["fit_window"][1]:
            raise ConfigError("sweep fit_window must be increasing")
    return cfg


def build_experiment(cfg: dict) -> Experiment:
    cfg = validate_config(cfg)
    model_doc = cfg["model"]
    model = _build_model(model_doc)
    target = _build_target(cfg["target"], model, model.gate_time)
    if target.dim != model.dim:
        raise ConfigError(f"target dimension {target.dim} does not match the model ({model.dim})")

    default_steps = 2000 if model.n_qubits == 1 else 10_000
    grid = TimeGrid(model.gate_time, cfg.get("grid", {}).get("n_steps", default_steps))

    seed = cfg.get("seed", 1234)
    opt_doc = dict(cfg.get("optimizer", {}))
    optimizer = OptimizerConfig(seed=seed, **opt_doc)

    windows = {
        lb: FtfWindow(win["low"], win["high"]) for lb, win in cfg.get("ftf_windows", {}).items()
    }
    window_points = max(
        [win.get("points", 257) for win in cfg.get("ftf_windows", {}).values()], default=257
    )
    strategies = tuple(
        Strategy(kind, windows=windows or None, window_points=window_points)
        if kind == "ftf"
        else Strategy(kind)
        for kind in cfg.get("strategies", ["tvn"])
    )

    default_n = 2000 if model.n_qubits == 1 else 500
    mc_doc = cfg.get("monte_carlo", {})
    sweep_doc = cfg.get("sweep")
    return Experiment(
        name=cfg.get("name", "experiment"),
        config=cfg,
        model=model,
        target=target,
        grid=grid,
        strategies=strategies,
        optimizer=optimizer,
        pipeline=tuple(cfg.get("pipeline", _default_pipeline(cfg))),
        mc_realizations=mc_doc.get("n_realizations", default_n),
        mc_chunk_size=mc_doc.get("chunk_size", 250),
        sweep_multipliers=tuple(sweep_doc["multipliers"]) if sweep_doc else None,
        sweep_realizations=(sweep_doc or {}).get("n_realizations", default_n),
        sweep_fit_window=tuple(sweep_doc["fit_window"]) if sweep_doc and "fit_window" in sweep_doc else None,
        filter_points=cfg.get("filter", {}).get("n_points", 2048),
        figures=cfg.get("report", {}).get("figures", True),
        seed=seed,
    )


def load_config(source: Union[str, Path, dict]) -> dict:
    """Validated config from a dict, a bundled name, or a file path."""
    if isinstance(source, dict):
        return validate_config(source)
    text = str(source)
    bundle = catalog_config(text, missing_ok=True)
    if bundle is not None:
        return bundle
    path = Path(text)
    if not path.exists():
        raise ConfigError(
            f"{text!r} is neither a bundled config name nor an existing file; "
            f"bundled names include {', '.join(catalog_names()[:4])}, ..."
        )
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} does not contain a mapping")
    return validate_config(doc)


# ---------------------------------------------------------------------------
# bundled catalog

_GATES = ("hadamard", "phase", "pi8")
_FREQS = {"lowfreq": 1e-7, "midfreq": 1e-3, "highfreq": 1e-1}
_NOISE_SETS_1Q = {"z": ("Z",), "x": ("X",), "zx": ("Z", "X")}
_NOISE_SETS_2Q = {
    "z": ("Z1", "Z2"),
    "xj": ("X1", "X2", "J"),
    "zxj": ("Z1", "Z2", "X1", "X2", "J"),
}
_2Q_OPERATORS = {"Z1": "Z1/2", "Z2": "Z2/2", "X1": "X1/2", "X2": "X2/2", "J": "Z1Z2/2"}
_SIGMA_DEFAULT = 1e-3
_FIG4_WINDOWS = {0.1: 1.0, 0.3: 2.0, 0.5: 3.0}


def _ou_noise(label: str, operator: str, gamma: float, sigma: float = _SIGMA_DEFAULT) -> dict:
    return {
        "label": label,
        "operator": operator,
        "coupling": "additive",
        "correlation": {"kind": "ou", "sigma": sigma, "gamma": gamma},
    }


def _single_qubit_entry(gate: str, strategy: str, noise_set: str, freq: str) -> dict:
    gamma = _FREQS[freq]
    noises = [_ou_noise(lb, f"{lb}/2", gamma) for lb in _NOISE_SETS_1Q[noise_set]]
    multipliers = [float(f"{m:.6g}") for m in np.geomspace(0.1, 10.0, 9)]
    return {
        "schema": SCHEMA_VERSION,
        "model": {"kind": "single_qubit", "gate_time": 20.0, "k_max": 10, "noises": noises},
        "target": gate,
        "grid": {"n_steps": 2000},
        "strategies": [strategy],
        "seed": 1234,
        "monte_carlo": {"n_realizations": 2000},
        "sweep": {
            "multipliers": multipliers,
            "n_realizations": 2000,
            "fit_window": [1e-4, 1e-2],
        },
        "pipeline": ["optimize", "verify", "sweep", "filter"],
    }


def _cnot_entry(noise_set: str, gate_time: float) -> dict:
    noises = [_ou_noise(lb, _2Q_OPERATORS[lb], 1e-1) for lb in _NOISE_SETS_2Q[noise_set]]
    return {
        "schema": SCHEMA_VERSION,
        "long_running": True,
        "model": {
            "kind": "two_qubit",
            "gate_time": gate_time,
            "k_max_drive": 16,
            "k_max_coupling": 8,
            "noises": noises,
        },
        "target": "cnot",
        "grid": {"n_steps": 10_000 if gate_time >= 100.0 else 2000},
        "strategies": ["tvn"],
        "seed": 1234,
        "monte_carlo": {"n_realizations": 500},
        "sweep": {
            "multipliers": [float(f"{m:.6g}") for m in np.geomspace(0.1, 10.0, 7)],
            "n_realizations": 500,
        },
        "pipeline": ["optimize", "verify", "sweep", "filter"],
    }


def _fig4_entry(gamma: float) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "model": {
            "kind": "single_qubit",
            "gate_time": 20.0,
            "k_max": 10,
            "noises": [
                {
                    "label": "Z",
                    "operator": "Z/2",
                    "coupling": "additive",
                    "correlation": {"kind": "two_peak", "sigma": _SIGMA_DEFAULT, "gamma": gamma},
                }
            ],
        },
        "target": "hadamard",
        "grid": {"n_steps": 2000},
        "strategies": ["idg", "ftf", "tvn"],
        "ftf_windows": {"Z": {"low": 0.0, "high": _FIG4_WINDOWS[gamma]}},
        "seed": 1234,
        "pipeline": ["optimize", "filter"],
    }


def _build_catalog() -> dict[str, dict]:
    entries: dict[str, dict] = {}
    for gate in _GATES:
        for strategy in ("idg", "qsn", "tvn"):
            for noise_set in _NOISE_SETS_1Q:
                for freq in _FREQS:
                    tokens = [gate, strategy] + ([noise_set] if noise_set != "z" else []) + [freq]
                    entries["_".join(tokens)] = _single_qubit_entry(gate, strategy, noise_set, freq)
    for noise_set in _NOISE_SETS_2Q:
        for gate_time in (20.0, 100.0):
            entries[f"cnot_{noise_set}_t{int(gate_time)}"] = _cnot_entry(noise_set, gate_time)
    for gamma in (0.1, 0.3, 0.5):
        entries[f"fig4_gamma{str(gamma).replace('0.', '0')}"] = _fig4_entry(gamma)
    for name, doc in entries.items():
        doc["name"] = name
    return entries


_CATALOG = _build_catalog()


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def catalog_config(name: str, missing_ok: bool = False) -> Optional[dict]:
    """Deep copy of a bundled config, already schema-valid by construction."""
    if name not in _CATALOG:
        if missing_ok:
            return None
        raise ConfigError(f"unknown bundled config {name!r}; known: {', '.join(catalog_names())}")
    return copy.deepcopy(_CATALOG[name])
