"""File emission for experiment results: CSV tables plus SVG figures.

SVG output is byte-deterministic for identical inputs: the hash salt is
pinned and the date metadata is stripped.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib import cm, colormaps, colors  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ExperimentResult  # noqa: E402
from .nn import save_loss_curve  # noqa: E402

_HASH_SALT = "sinkbridge"
PALETTE = "viridis"


def _new_figure(figsize=(6.4, 4.8)):
    plt.rcParams["svg.hashsalt"] = _HASH_SALT
    return plt.subplots(figsize=figsize)


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _column(table, name):
    idx = table.columns.index(name)
    return [row[idx] for row in table.rows]


def _plot_mse_sample(result: ExperimentResult, path: Path) -> None:
    """Heatmap of log10(MSE) over the (m, t) grid, drawn as explicit
    rectangles so every cell's fill color is inspectable in the SVG."""
    ts = sorted(set(_column(result.table, "t")))
    ms = sorted(set(_column(result.table, "m")))
    grid = np.full((len(ts), len(ms)), np.nan)
    for row in result.table.rows:
        t, m, mse = row[0], row[1], row[3]
        grid[ts.index(t), ms.index(m)] = np.log10(mse)
    norm = colors.Normalize(vmin=np.nanmin(grid), vmax=np.nanmax(grid))
    cmap = colormaps[PALETTE]

    fig, ax = _new_figure()
    for i in range(len(ts)):
        for j in range(len(ms)):
            ax.add_patch(
                Rectangle((j, i), 1, 1, facecolor=cmap(norm(grid[i, j])), edgecolor="none")
            )
    ax.set_xlim(0, len(ms))
    ax.set_ylim(0, len(ts))
    ax.set_xticks([j + 0.5 for j in range(len(ms))])
    ax.set_xticklabels([str(m) for m in ms])
    ax.set_yticks([i + 0.5 for i in range(len(ts))])
    ax.set_yticklabels([str(t) for t in ts])
    ax.set_xlabel("m = n")
    ax.set_ylabel("t")
    ax.set_title("drift MSE vs sample size (log10 color scale)")
    fig.colorbar(cm.ScalarMappable(norm=norm, cmap=cmap), ax=ax, label="log10 MSE")
    _save(fig, path)


def _plot_mse_iter(result: ExperimentResult, path: Path) -> None:
    fig, ax = _new_figure()
    taus = sorted(set(_column(result.table, "tau")))
    for tau in taus:
        ks = [r[1] for r in result.table.rows if r[0] == tau]
        vals = [r[2] for r in result.table.rows if r[0] == tau]
        ax.semilogy(ks, vals, marker="o", label=f"tau={tau}")
    ax.set_xlabel("Sinkhorn iteration k")
    ax.set_ylabel("integrated drift MSE")
    ax.set_title("algorithmic convergence")
    ax.legend()
    _save(fig, path)


def _plot_dim_sweep(result: ExperimentResult, path: Path) -> None:
    fig, ax = _new_figure()
    d_nus = _column(result.table, "d_nu")
    vals = _column(result.table, "integrated_mse")
    ax.bar([str(d) for d in d_nus], vals, color="tab:blue")
    ax.plot([str(d) for d in d_nus], vals, color="tab:orange", marker="o")
    ax.set_xlabel("intrinsic dimension of the target")
    ax.set_ylabel("integrated drift MSE")
    ax.set_title("error vs intrinsic dimension")
    _save(fig, path)


def _plot_eps_search(result: ExperimentResult, path: Path) -> None:
    fig, ax = _new_figure()
    ms, epss = [], []
    for row in result.table.rows:
        if row[4] == "attained":
            ms.append(row[0])
            epss.append(row[3])
    ax.loglog(ms, epss, marker="o")
    ax.set_xlabel("m = n")
    ax.set_ylabel("smallest eps meeting the target error")
    ax.set_title("eps search profile")
    _save(fig, path)


def _plot_loss_curve(losses, path: Path) -> None:
    fig, ax = _new_figure()
    ax.semilogy(range(len(losses)), losses)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("distillation loss")
    _save(fig, path)


def _plot_trajectories(batch, path: Path) -> None:
    fig, ax = _new_figure(figsize=(6.4, 6.4))
    n_show = min(batch.n_paths, 100)
    for p in range(n_show):
        ax.plot(batch.states[p, :, 0], batch.states[p, :, 1],
                color="tab:blue", alpha=0.25, linewidth=0.7)
    ax.scatter(batch.states[:n_show, 0, 0], batch.states[:n_show, 0, 1],
               s=8, color="tab:green", label="t=0")
    ax.scatter(batch.states[:n_show, -1, 0], batch.states[:n_show, -1, 1],
               s=8, color="tab:red", label=f"t={float(batch.times[-1])}")
    ax.set_aspect("equal")
    ax.legend()
    ax.set_title("bridge trajectories")
    _save(fig, path)


def emit_outputs(
    result: ExperimentResult, out_dir: str | Path, extra_meta: dict | None = None
) -> list[Path]:
    """Write the result's CSVs, figure, and run metadata; returns the paths."""
    if not result.table.rows:
        raise ValueError("refusing to emit an empty result table")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    csv_path = out / f"{result.name}.csv"
    result.table.to_csv(csv_path)
    written.append(csv_path)
    if result.fits is not None:
        fits_path = out / f"{result.name}_fits.csv"
        result.fits.to_csv(fits_path)
        written.append(fits_path)

    svg_path = out / f"{result.name}.svg"
    if result.name == "mse-sample":
        _plot_mse_sample(result, svg_path)
    elif result.name == "mse-iter":
        _plot_mse_iter(result, svg_path)
    elif result.name == "dim-sweep":
        _plot_dim_sweep(result, svg_path)
    elif result.name == "eps-search":
        _plot_eps_search(result, svg_path)
    elif result.name == "distill":
        _plot_loss_curve(result.artifacts["losses"], svg_path)
    elif result.name == "simulate":
        _plot_trajectories(result.artifacts["trajectories"], svg_path)
    written.append(svg_path)

    if result.name == "distill":
        ckpt = out / "model.sbnn"
        result.artifacts["model"].save(ckpt)
        written.append(ckpt)
        curve = out / "loss_curve.csv"
        save_loss_curve(result.artifacts["losses"], curve)
        written.append(curve)
    if result.name == "simulate":
        traj = out / "trajectories.csv"
        result.artifacts["trajectories"].to_csv(traj)
        written.append(traj)

    meta = dict(result.meta)
    meta["passed"] = result.passed
    meta["message"] = result.message
    if extra_meta:
        meta.update(extra_meta)
    meta_path = out / "run_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, default=str) + "\n")
    written.append(meta_path)
    return written
