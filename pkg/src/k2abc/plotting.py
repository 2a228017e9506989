"""Figures written next to the CSV/JSON outputs of a run."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "figure.dpi": 120,
    "savefig.bbox": "tight",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
})

# PNG metadata carries a timestamp-free software tag only.
_META = {"Software": None}


def save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def tuning_curve(scores, path):
    fig, ax = plt.subplots(figsize=(4.0, 2.8))
    scales = sorted({r["bandwidth_scale"] for r in scores})
    for s in scales:
        rows = [r for r in scores if r["bandwidth_scale"] == s and np.isfinite(r["score"])]
        if rows:
            label = f"bandwidth x{s:g}" if len(scales) > 1 else None
            ax.plot([r["epsilon"] for r in rows], [r["score"] for r in rows], "o-", label=label)
    ax.set_xscale("log")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("tuning score")
    if len(scales) > 1:
        ax.legend(frameon=False)
    return save(fig, path)


def posterior_marginals(post, names, path, truth=None):
    d = post.params.shape[1]
    fig, axes = plt.subplots(1, d, figsize=(1.9 * d, 2.2), squeeze=False)
    w = post.weights if post.weight_kind == "normalized" else None
    for j, ax in enumerate(axes[0]):
        ax.hist(post.params[:, j], bins=30, weights=w, color="0.6")
        ax.axvline(post.weights @ post.params[:, j], color="k", lw=1.5)
        if truth is not None:
            ax.axvline(truth[j], color="tab:red", lw=1, ls="--")
        ax.set_title(names[j])
        ax.set_yticks([])
    return save(fig, path)


def observed_vs_simulated(observed, simulated, path, series: bool):
    fig, ax = plt.subplots(figsize=(4.5, 2.6))
    if series:
        ax.plot(observed, color="k", lw=1, label="observed")
        ax.plot(simulated, color="tab:red", lw=1, label="at posterior mean")
        ax.set_xlabel("t")
    else:
        bins = np.linspace(min(observed.min(), simulated.min()), max(observed.max(), simulated.max()), 26)
        ax.hist(observed, bins=bins, color="k", alpha=0.5, label="observed")
        ax.hist(simulated, bins=bins, color="tab:red", alpha=0.5, label="at posterior mean")
    ax.legend(frameon=False)
    return save(fig, path)


def render_run(out, report, post, observed, model):
    out = Path(out)
    paths = []
    if report.scores:
        paths.append(tuning_curve(report.scores, out / "tuning.png"))
    truth = report.true_params
    paths.append(posterior_marginals(post, model.param_names, out / "posterior.png", truth))
    try:
        theta = model.project(report.posterior_mean)
        rng = np.random.default_rng(report.config["seed"])
        sim = model.simulate(theta, len(observed), rng)
        paths.append(observed_vs_simulated(np.asarray(observed), sim, out / "simulated.png",
                                           series=model.name == "blowfly"))
    except (ValueError, RuntimeError):
        pass
    return paths


def render_eval(out, results):
    fig, ax = plt.subplots(figsize=(1.2 * len(results) + 1.5, 2.8))
    data = [[d for d in r["distances"] if np.isfinite(d)] or [np.nan] for r in results.values()]
    ax.boxplot(data)
    ax.set_xticks(range(1, len(results) + 1), list(results))
    ax.set_ylabel("summary-statistic distance")
    return save(fig, Path(out) / "eval.png")
