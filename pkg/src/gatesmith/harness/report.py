"""Run artifacts: CSV tables, the JSON report, the config echo, and figures.

Numeric CSV content is formatted with a fixed precision so that re-running
with the same config and seed reproduces the files byte for byte.  Figures
are a convenience rendering of the same data the CSVs carry; they are
written alongside the tables when the config asks for them.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import yaml

from ..optimize import apply_parameters
from ..propagate import TimeGrid
from ..spectral import FilterFunction

__all__ = [
    "write_sweep_csv",
    "write_filter_csv",
    "write_cost_table",
    "write_report",
    "write_config_echo",
    "render_figures",
]

_FMT = "%.12e"


def _fmt(x: float) -> str:
    return _FMT % float(x)


def write_sweep_csv(path: Path, sweep) -> None:
    """`sigma,mean_infidelity,stderr,n` rows, one per sweep point."""
    lines = ["sigma,mean_infidelity,stderr,n"]
    for s, m, e in zip(sweep.sigmas, sweep.means, sweep.stderrs):
        lines.append(f"{_fmt(s)},{_fmt(m)},{_fmt(e)},{sweep.n_realizations}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_filter_csv(path: Path, ff: FilterFunction, label: str) -> None:
    """`omega,F,F_over_2pi_omega2` rows for one noise channel."""
    weight = ff.weight(label)
    response = ff.response(label)
    lines = ["omega,F,F_over_2pi_omega2"]
    for w, f, fw in zip(ff.omega, response, weight / (2.0 * np.pi)):
        lines.append(f"{_fmt(w)},{_fmt(f)},{_fmt(fw)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_cost_table(path: Path, strategy_docs: dict) -> None:
    """One row per strategy with the scored cost breakdown."""
    columns = (
        "ideal_infidelity",
        "avg_noise_infidelity",
        "total",
        "mc_mean_infidelity",
        "mc_stderr",
    )
    lines = ["strategy," + ",".join(columns)]
    for kind, entry in strategy_docs.items():
        bd = entry["breakdown"]
        cells = [_fmt(bd[c]) if bd.get(c) is not None else "" for c in columns]
        lines.append(f"{kind}," + ",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_report(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_config_echo(path: Path, cfg: dict) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=False)


# ---------------------------------------------------------------------------
# figures


def _agg_pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_figures(out: Path, exp, runs: dict, doc: dict) -> list[str]:
    """Sweep, filter-function, pulse, and cost-trace figures as PNG files."""
    plt = _agg_pyplot()
    written: list[str] = []

    sweep_entries = {
        kind: entry["sweep"] for kind, entry in doc["strategies"].items() if "sweep" in entry
    }
    if sweep_entries:
        fig, ax = plt.subplots(figsize=(5, 4))
        for kind, meta in sweep_entries.items():
            rows = np.genfromtxt(out / meta["csv"], delimiter=",", names=True)
            ax.errorbar(
                rows["sigma"], rows["mean_infidelity"], yerr=rows["stderr"],
                marker="o", ms=3, lw=1, capsize=2,
                label=f"{kind} (slope {meta['slope']:.2f})",
            )
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("noise standard deviation")
        ax.set_ylabel("mean infidelity")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out / "sweep.png", dpi=150)
        plt.close(fig)
        written.append("sweep.png")

    filter_entries = {
        kind: entry["filter"]["csv"]
        for kind, entry in doc["strategies"].items()
        if "filter" in entry
    }
    if filter_entries:
        labels = sorted({lb for csvs in filter_entries.values() for lb in csvs})
        fig, axes = plt.subplots(
            1, len(labels), figsize=(5 * len(labels), 4), squeeze=False
        )
        for ax, label in zip(axes[0], labels):
            for kind, csvs in filter_entries.items():
                if label not in csvs:
                    continue
                rows = np.genfromtxt(out / csvs[label], delimiter=",", names=True)
                mask = rows["omega"] > 0
                ax.plot(rows["omega"][mask], rows["F_over_2pi_omega2"][mask], lw=1, label=kind)
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel("angular frequency")
            ax.set_ylabel(f"filter weight, channel {label}")
            ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out / "filter.png", dpi=150)
        plt.close(fig)
        written.append("filter.png")

    grid: TimeGrid = exp.grid
    t = np.linspace(0.0, grid.gate_time, 512)
    fig, axes = plt.subplots(
        len(runs), 1, figsize=(6, 2.2 * len(runs)), sharex=True, squeeze=False
    )
    for ax, (kind, run) in zip(axes[:, 0], runs.items()):
        tuned = apply_parameters(exp.model, run.x)
        for ch in tuned.controls:
            ax.plot(t, ch.pulse.values(t), lw=1, label=ch.label)
        ax.set_ylabel(kind)
        ax.legend(fontsize=8, loc="upper right")
    axes[-1, 0].set_xlabel("time")
    fig.tight_layout()
    fig.savefig(out / "pulses.png", dpi=150)
    plt.close(fig)
    written.append("pulses.png")

    fig, ax = plt.subplots(figsize=(5, 4))
    for kind, run in runs.items():
        if run.trace:
            xs, ys = zip(*run.trace)
            ax.plot(xs, ys, drawstyle="steps-post", lw=1, label=kind)
    ax.set_yscale("log")
    ax.set_xlabel("cost evaluations")
    ax.set_ylabel("best cost so far")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "trace.png", dpi=150)
    plt.close(fig)
    written.append("trace.png")

    return written
