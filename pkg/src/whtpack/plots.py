"""SVG charts of benchmark metrics: accuracy curves per grid cell and accuracy-at-epoch bars."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SizeError
from .experiment import METHODS, RunMetrics, read_metrics

BAR_EPOCHS = (20, 35, 50)
LABELS = {
    "fixed_region": "fixed region",
    "adaptive_region": "adaptive region",
    "wht_only": "WHT-only",
    "dct": "DCT",
}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({"svg.fonttype": "none", "svg.hashsalt": "whtpack"})
    return plt


def _mean_curve(rows, method, gamma, lam):
    by_epoch: dict = {}
    for r in rows:
        if r.method == method and r.gamma == gamma and r.lam == lam:
            by_epoch.setdefault(r.epoch, []).append(r.val_acc)
    epochs = sorted(by_epoch)
    return epochs, [float(np.mean(by_epoch[e])) for e in epochs]


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def emit_plots(metrics, out_dir, methods: Sequence[str] = METHODS,
               bar_epochs: Sequence[int] = BAR_EPOCHS) -> list[Path]:
    """Write one line chart per (gamma, lambda) cell and one bar chart per epoch in ``bar_epochs``.

    ``metrics`` is a CSV path or a list of :class:`RunMetrics`. Methods with
    no rows are left out of the charts and named in a legend note.
    """
    rows: list[RunMetrics] = read_metrics(metrics) if isinstance(metrics, (str, Path)) else list(metrics)
    if not rows:
        raise SizeError("no metrics rows to plot")
    plt = _pyplot()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    present = [m for m in methods if any(r.method == m for r in rows)]
    missing = [m for m in methods if m not in present]
    note = "missing: " + ", ".join(LABELS.get(m, m) for m in missing) if missing else None
    written = []

    for gamma, lam in sorted({(r.gamma, r.lam) for r in rows}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for m in present:
            epochs, acc = _mean_curve(rows, m, gamma, lam)
            if epochs:
                ax.plot(epochs, acc, label=LABELS.get(m, m))
        if note:
            ax.plot([], [], " ", label=note)
        ax.set_xlabel("epoch")
        ax.set_ylabel("validation accuracy")
        ax.set_ylim(0.0, 1.02)
        ax.set_title(f"gamma={gamma}, lambda={lam}")
        ax.legend(loc="lower right")
        path = out_dir / f"val_acc_gamma{gamma}_lambda{lam}.svg"
        _save(fig, path)
        plt.close(fig)
        written.append(path)

    max_epoch = max(r.epoch for r in rows)
    gammas = sorted({r.gamma for r in rows})
    width = 0.8 / max(1, len(present))
    for epoch in bar_epochs:
        if epoch > max_epoch:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        xs = np.arange(len(gammas))
        for i, m in enumerate(present):
            vals = []
            for g in gammas:
                accs = [r.val_acc for r in rows if r.method == m and r.gamma == g and r.epoch == epoch]
                vals.append(float(np.mean(accs)) if accs else 0.0)
            ax.bar(xs + i * width, vals, width, label=LABELS.get(m, m))
        if note:
            ax.bar([0], [0], 0, label=note, color="none")
        ax.set_xticks(xs + width * (len(present) - 1) / 2)
        ax.set_xticklabels([f"gamma={g}" for g in gammas])
        ax.set_ylabel("validation accuracy")
        ax.set_ylim(0.0, 1.02)
        ax.set_title(f"accuracy at epoch {epoch}")
        ax.legend(loc="lower right")
        path = out_dir / f"bars_epoch{epoch}.svg"
        _save(fig, path)
        plt.close(fig)
        written.append(path)
    return written
