"""Alpha trace export: per-epoch traces, per-layer histograms, composite curves."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import activations, checkpoint

TRACE_FIELDS = ["epoch", "layer", "unit", "function", "alpha"]
HIST_BINS = 10
CURVE_POINTS = 201


def trace_rows(net, epoch: int):
    """One row per (ensemble layer, unit, function); layers are numbered from 1."""
    for li, layer in enumerate(net.ensemble_layers(), 1):
        ids = layer.act_set.ids
        for unit, row in enumerate(layer.params.alpha):
            for fid, a in zip(ids, row):
                yield [epoch, li, unit, fid, repr(float(a))]


class AlphaTrace:
    """In-memory view of a trace: ``alphas[epoch][layer]`` is a [units, m] array."""

    def __init__(self, functions: dict[int, list[str]], alphas: dict[int, dict[int, np.ndarray]]):
        self.functions = functions
        self.alphas = alphas

    @property
    def epochs(self) -> list[int]:
        return sorted(self.alphas)

    @property
    def layers(self) -> list[int]:
        return sorted(self.functions)

    def at(self, epoch: int, layer: int) -> np.ndarray:
        return self.alphas[epoch][layer]

    def mean_alpha(self, epoch: int, layer: int) -> dict[str, float]:
        means = self.at(epoch, layer).mean(axis=0)
        return dict(zip(self.functions[layer], means.tolist()))

    @classmethod
    def read(cls, path) -> "AlphaTrace":
        cells = defaultdict(dict)
        functions: dict[int, list[str]] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != TRACE_FIELDS:
                raise ValueError(f"{path}: expected columns {TRACE_FIELDS}, got {reader.fieldnames}")
            for row in reader:
                epoch, layer, unit = int(row["epoch"]), int(row["layer"]), int(row["unit"])
                fids = functions.setdefault(layer, [])
                if row["function"] not in fids:
                    fids.append(row["function"])
                cells[(epoch, layer)][(unit, row["function"])] = float(row["alpha"])
        alphas: dict[int, dict[int, np.ndarray]] = defaultdict(dict)
        for (epoch, layer), vals in cells.items():
            fids = functions[layer]
            units = 1 + max(u for u, _ in vals)
            arr = np.zeros((units, len(fids)))
            for (u, fid), a in vals.items():
                arr[u, fids.index(fid)] = a
            alphas[epoch][layer] = arr
        return cls(functions, dict(alphas))

    @classmethod
    def from_checkpoint(cls, path) -> "AlphaTrace":
        meta, arrays = checkpoint.load(path)
        if not meta.get("functions"):
            raise ValueError(f"{path} is a baseline (relu) checkpoint: it has no alpha weights")
        keys = [k for k in arrays if k.endswith(".ensemble/alpha")]
        functions = {li: list(meta["functions"]) for li in range(1, len(keys) + 1)}
        alphas = {int(meta["epoch"]): {li: arrays[k] for li, k in enumerate(keys, 1)}}
        return cls(functions, alphas)


def histogram(alpha: np.ndarray, bins: int = HIST_BINS) -> np.ndarray:
    """Counts of alpha values per function in ``bins`` equal bins over [0, 1]."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    return np.stack([np.histogram(np.clip(col, 0.0, 1.0), bins=edges)[0] for col in alpha.T])


def composite_curve(alpha_row, function_ids, x=None) -> tuple[np.ndarray, np.ndarray]:
    """``sum_j alpha_j f_j(x)`` on a grid over [-1, 1]; no normalisation, no eta/delta."""
    if x is None:
        x = np.linspace(-1.0, 1.0, CURVE_POINTS)
    y = np.zeros_like(x)
    for a, fid in zip(alpha_row, function_ids):
        y += a * activations.get(fid)(x)
    return x, y


def _fmt_bin(lo: float, hi: float) -> str:
    return f"{lo:.1f}-{hi:.1f}"


def export_alpha(trace: AlphaTrace, out_dir, epoch: int | None = None, units=None,
                 svg: bool = False) -> list[Path]:
    """Write trace, histogram and composite-curve CSVs (and SVGs) into ``out_dir``.

    ``epoch`` defaults to the last epoch in the trace; ``units`` defaults to
    the first five units of each layer.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    epoch = trace.epochs[-1] if epoch is None else epoch
    if epoch not in trace.alphas:
        raise ValueError(f"epoch {epoch} not in trace (have {trace.epochs[0]}..{trace.epochs[-1]})")
    written = []

    path = out / "alpha_trace.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for ep in trace.epochs:
            for layer in trace.layers:
                fids = trace.functions[layer]
                for unit, row in enumerate(trace.at(ep, layer)):
                    w.writerows([ep, layer, unit, fid, repr(float(a))] for fid, a in zip(fids, row))
    written.append(path)

    edges = np.linspace(0.0, 1.0, HIST_BINS + 1)
    for layer in trace.layers:
        counts = histogram(trace.at(epoch, layer))
        path = out / f"alpha_hist_layer{layer}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["function"] + [_fmt_bin(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])])
            for fid, row in zip(trace.functions[layer], counts):
                w.writerow([fid, *row.tolist()])
        written.append(path)

    path = out / "composite_curves.csv"
    curves = []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "unit", "x", "y"])
        for layer in trace.layers:
            alpha = trace.at(epoch, layer)
            chosen = range(min(5, len(alpha))) if units is None else units
            for unit in chosen:
                x, y = composite_curve(alpha[unit], trace.functions[layer])
                curves.append((layer, unit, x, y))
                w.writerows([layer, unit, repr(float(a)), repr(float(b))] for a, b in zip(x, y))
    written.append(path)

    if svg:
        written += _write_svgs(trace, epoch, curves, out)
    return written


def _write_svgs(trace: AlphaTrace, epoch: int, curves, out: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "actensemble"}):
        return _draw(plt, trace, epoch, curves, out)


def _draw(plt, trace: AlphaTrace, epoch: int, curves, out: Path) -> list[Path]:
    written = []
    meta = {"Date": None}
    for layer in trace.layers:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        alpha = trace.at(epoch, layer)
        ax.hist([alpha[:, j] for j in range(alpha.shape[1])], bins=HIST_BINS, range=(0, 1),
                label=trace.functions[layer])
        ax.set_xlabel("alpha")
        ax.set_ylabel("units")
        ax.set_title(f"layer {layer}, epoch {epoch}")
        ax.legend(fontsize="small")
        path = out / f"alpha_hist_layer{layer}.svg"
        fig.savefig(path, metadata=meta)
        plt.close(fig)
        written.append(path)

        fig, ax = plt.subplots(figsize=(6, 3.5))
        means = np.array([trace.at(ep, layer).mean(axis=0) for ep in trace.epochs])
        for j, fid in enumerate(trace.functions[layer]):
            ax.plot(trace.epochs, means[:, j], label=fid)
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean alpha")
        ax.legend(fontsize="small")
        path = out / f"alpha_trajectory_layer{layer}.svg"
        fig.savefig(path, metadata=meta)
        plt.close(fig)
        written.append(path)

    if curves:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for layer, unit, x, y in curves:
            ax.plot(x, y, label=f"L{layer} u{unit}")
        ax.set_xlabel("x")
        ax.set_ylabel("sum_j alpha_j f_j(x)")
        ax.legend(fontsize="x-small", ncol=2)
        path = out / "composite_curves.svg"
        fig.savefig(path, metadata=meta)
        plt.close(fig)
        written.append(path)
    return written
