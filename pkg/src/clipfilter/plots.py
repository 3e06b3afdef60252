"""Figure rendering for run reports, training curves, and iteration sweeps.

All functions write PNG files next to the main output and return the paths
they created.  Rendering is optional everywhere; reports stay authoritative.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _sibling(out_path: Path, suffix: str) -> Path:
    return out_path.with_name(out_path.stem + suffix + ".png")


def render_run_figures(report: dict, out_path: str | Path) -> list[Path]:
    out_path = Path(out_path)
    created = []

    samples = report["samples"]
    fig, axes = plt.subplots(1, len(samples), figsize=(3.2 * len(samples), 2.8),
                             squeeze=False)
    for ax, sample in zip(axes[0], samples):
        sal = sample["saliency"]
        ax.bar(range(len(sal)), sal, color="tab:blue")
        ax.set_title(sample["id"], fontsize=9)
        ax.set_xlabel("clip")
        ax.set_ylabel("saliency")
        ax.set_ylim(-1.05, 1.05)
    fig.tight_layout()
    path = _sibling(out_path, "_saliency")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    created.append(path)

    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    for sample in samples:
        ax.plot(sample["trace_norms"], marker="o", label=sample["id"])
    ax.set_xlabel("filter iteration")
    ax.set_ylabel("L1 norm of filtered features")
    if len(samples) <= 8:
        ax.legend(fontsize=7)
    fig.tight_layout()
    path = _sibling(out_path, "_trace")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    created.append(path)
    return created


def render_loss_curve(rows: list[dict], out_path: str | Path) -> Path:
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    steps = [r["step"] for r in rows]
    for key in ("l_qv", "l_qc", "l_cc", "l_ma"):
        ax.plot(steps, [r[key] for r in rows], label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = _sibling(out_path, "_loss")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_sweep(rows: list[dict], out_path: str | Path) -> Path:
    out_path = Path(out_path)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.2, 3.0))
    ns = [r["iters"] for r in rows]
    ax1.plot(ns, [r["mean_final_trace_l1"] for r in rows], marker="s", color="tab:orange")
    ax1.set_xlabel("filter iterations")
    ax1.set_ylabel("mean final L1 norm")
    ax2.plot(ns, [r["l_ma"] for r in rows], marker="o")
    ax2.set_xlabel("filter iterations")
    ax2.set_ylabel("l_ma")
    fig.tight_layout()
    path = _sibling(out_path, "_sweep")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
