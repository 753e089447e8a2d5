"""Figures written next to a report's CSV files (non-interactive backend)."""
from __future__ import annotations

import csv
import os
from typing import Dict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read_trajectory(path: str):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    it = np.array([int(r["iter"]) for r in rows])
    theta = np.array([[float(r[k]) for k in r if k.startswith("theta_")] for r in rows])
    return it, theta


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_trajectories(report, setting: str, path: str) -> str:
    """Distance to theta* along every recorded run of one setting."""
    fig, ax = plt.subplots(figsize=(6, 4))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, method in enumerate(report.config.methods):
        runs = [r for r in report.runs if r["setting"] == setting and r["method"] == method
                and r["status"] == "ok" and "file" in r]
        for j, r in enumerate(runs):
            it, theta = _read_trajectory(r["file"])
            err = np.maximum(np.linalg.norm(theta, axis=1), 1e-6)
            ax.plot(it, err, color=colors[i % len(colors)], alpha=0.5, lw=0.8,
                    label=method if j == 0 else None)
    ax.set_yscale("log")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("|theta_n - theta*|")
    ax.set_title(setting)
    ax.legend()
    return _save(fig, path)


def plot_summary(report, path: str) -> str:
    """Mean error with 95% CI per setting, one series per method."""
    settings = report.config.settings()
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(len(settings))
    methods = list(report.config.methods)
    width = 0.8 / len(methods)
    for i, method in enumerate(methods):
        rows = [next(r for r in report.summary if r["setting"] == s and r["method"] == method)
                for s in settings]
        ax.bar(x + (i - (len(methods) - 1) / 2) * width, [r["mean_err"] for r in rows], width,
               yerr=[r["ci95"] for r in rows], capsize=3, label=method)
    ax.set_xticks(x)
    ax.set_xticklabels(settings, rotation=20)
    ax.set_ylabel("mean error")
    ax.set_title(report.config.experiment.value)
    ax.legend()
    return _save(fig, path)


def plot_sweep(report, path: str) -> str:
    rows = report.summary
    deltas = [float(r["setting"].split("=")[1]) for r in rows]
    means = [r["mean_err"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(deltas, means, "o-", label="measured")
    if report.slope is not None:
        ref = means[0] * (np.array(deltas) / deltas[0])
        ax.loglog(deltas, ref, "--", color="gray", label="slope 1 reference")
        ax.set_title(f"fitted slope {report.slope:.2f}")
    ax.set_xlabel("delta")
    ax.set_ylabel("approximation error")
    ax.legend()
    return _save(fig, path)


def render_report(report) -> Dict[str, str]:
    """Write every figure that applies to the report; returns name -> path."""
    from .harness import Experiment, TOY_KINDS

    out = report.config.out_dir
    exp = report.config.experiment
    files = {}
    if exp is Experiment.APPROX_SWEEP:
        files["fig_sweep"] = plot_sweep(report, os.path.join(out, "sweep.png"))
        return files
    if exp is Experiment.SAMPLER_CHECK:
        return files
    files["fig_summary"] = plot_summary(report, os.path.join(out, "summary.png"))
    if exp in TOY_KINDS:
        for setting in report.config.settings():
            name = "".join(c if c.isalnum() else "_" for c in setting)
            files[f"fig_traj_{name}"] = plot_trajectories(
                report, setting, os.path.join(out, f"trajectory_{name}.png"))
    return files
