"""SVG plot emission for traces and codebook-size sweeps.

Plots are vector graphics (XML); the config hash is embedded as SVG
metadata and as the id-hash salt so reruns are reproducible.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save_svg(fig, path, config_hash: str | None) -> None:
    with plt.rc_context({"svg.hashsalt": config_hash or "ris-codebook"}):
        metadata = {"Date": None}
        if config_hash is not None:
            metadata["Description"] = f"config_hash={config_hash}"
        fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)


def plot_traces(bundle, out_dir, config_hash: str | None = None) -> list[str]:
    """One figure per cluster: best-so-far gain vs iteration per level/group."""
    out_dir = Path(out_dir)
    files = []
    for c, result in enumerate(bundle.results):
        if result is None:
            continue
        if not result.task_traces or all(
            t.iterations.shape[0] == 0 for t in result.task_traces
        ):
            raise ValueError(f"cluster {c} has an empty training trace")
        fig, ax = plt.subplots(figsize=(6, 4))
        for trace in result.task_traces:
            ax.plot(
                trace.iterations,
                trace.best_gain,
                label=f"level {trace.level}, group {trace.group}",
            )
        ax.set_xlabel("iteration")
        ax.set_ylabel("best beamforming gain")
        ax.set_title(f"cluster {c} learning progress")
        ax.legend(fontsize=8)
        path = out_dir / f"plot_trace_cluster{c}.svg"
        _save_svg(fig, path, config_hash)
        files.append(str(path))
    return files


def emit_plots(data, out_dir, config_hash: str | None = None) -> list[str]:
    """Render SVG plots for a result bundle or a sweep table.

    A bundle yields one gain-vs-iteration figure per cluster; a sweep table
    yields the gain-vs-beams figure. Data is validated before any file is
    opened, so failures leave no partial output.
    """
    out_dir = Path(out_dir)
    if hasattr(data, "results"):
        return plot_traces(data, out_dir, config_hash=config_hash)
    return [plot_sweep(data, out_dir / "plot_sweep.svg", config_hash=config_hash)]


def plot_sweep(table, path, config_hash: str | None = None) -> str:
    """Objective vs codebook size for learned, DFT, and the EGC bound."""
    table = list(table)
    if not table:
        raise ValueError("sweep table is empty")
    sizes = [row["n_beams"] for row in table]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sizes, [row["learned_objective"] for row in table], "o-", label="learned")
    ax.plot(sizes, [row["dft_objective"] for row in table], "s-", label="DFT (quantized)")
    ax.plot(sizes, [row["egc_mean"] for row in table], "--", label="EGC bound")
    ax.set_xlabel("codebook beams")
    ax.set_ylabel("average beamforming gain")
    ax.legend()
    _save_svg(fig, path, config_hash)
    return str(path)
