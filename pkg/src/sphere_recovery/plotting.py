"""Static figures from experiment record CSVs.

The CSV is the contract; these plots are a convenience view of it.  Imports
of the plotting backend stay inside the entry point so the rest of the
package works without it.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

__all__ = ["plot_records"]


def _load_rows(path):
    with open(path, "r", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_records(records_csv, out_png, kind: str) -> Path:
    """Render one figure for an experiment's records; returns the PNG path."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = _load_rows(records_csv)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if kind == "exact":
        by_k = defaultdict(list)
        for row in rows:
            by_k[int(float(row["cell"]))].append(float(row["error"]))
        ks = sorted(by_k)
        means = [np.mean(by_k[k]) for k in ks]
        for k in ks:
            ax.scatter([k] * len(by_k[k]), by_k[k], s=8, alpha=0.35, color="tab:blue")
        ax.plot(ks, means, color="tab:red", label="mean")
        ax.set_yscale("log")
        ax.set_xlabel("sparsity k")
        ax.set_ylabel("recovery error")
        ax.legend()
    elif kind == "tau-sweep":
        by_trial = defaultdict(list)
        for row in rows:
            by_trial[int(row["trial"])].append((float(row["tau"]), int(row["k_tau"])))
        for trial, pairs in sorted(by_trial.items()):
            pairs.sort()
            taus, counts = zip(*pairs)
            ax.step(taus, counts, where="post", alpha=0.5)
        ax.set_xlabel("tau")
        ax.set_ylabel("numerical sparsity k(tau)")
    elif kind == "approx":
        by_theta = defaultdict(list)
        for row in rows:
            by_theta[float(row["cell"])].append(float(row["error"]))
        thetas = sorted(by_theta)
        means = [np.mean(by_theta[t]) for t in thetas]
        ax.plot(thetas, means, marker="o")
        ax.set_xlabel("support offset angle")
        ax.set_ylabel("mean recovery error")
    elif kind == "consistency":
        cells = sorted((int(float(r["cell"])), float(r["error"])) for r in rows)
        ax.semilogy([c for c, _ in cells], [e for _, e in cells], marker="o")
        ax.set_xlabel("level j")
        ax.set_ylabel("coefficient error")
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    ax.set_title(f"{kind} experiment")
    fig.tight_layout()
    out_png = Path(out_png)
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return out_png
