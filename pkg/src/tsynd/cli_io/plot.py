"""SVG charts: accuracy by mode per perturbation, U traces and image differences."""

from __future__ import annotations

import json
import os
import re
from collections import OrderedDict, defaultdict
from typing import Dict, List, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..harness.metrics import MetricsRecord, read_metrics  # noqa: E402

PathLike = Union[str, os.PathLike]
_RC = {"svg.hashsalt": "tsynd", "svg.fonttype": "none", "font.family": "DejaVu Sans"}


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", text).strip("_") or "none"


def _save(fig, path: str) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def accuracy_table(rows: Sequence[MetricsRecord]) -> "OrderedDict[str, OrderedDict[str, float]]":
    """perturbation -> run id -> mean test accuracy over seeds (first-seen order)."""
    acc: Dict[str, Dict[str, List[float]]] = OrderedDict()
    for r in rows:
        if r.split == "test" and r.metric == "accuracy":
            acc.setdefault(r.perturbation, OrderedDict()).setdefault(r.run_id, []).append(r.value)
    return OrderedDict((p, OrderedDict((k, float(np.mean(v))) for k, v in runs.items())) for p, runs in acc.items())


def bar_charts(rows: Sequence[MetricsRecord], out_dir: PathLike) -> List[str]:
    written = []
    with plt.rc_context(_RC):
        for pert, runs in accuracy_table(rows).items():
            fig, ax = plt.subplots(figsize=(5, 3.5))
            names = list(runs)
            values = [runs[n] for n in names]
            bars = ax.bar(range(len(names)), values, color="#4c72b0")
            for bar, v in zip(bars, values):
                ax.text(bar.get_x() + bar.get_width() / 2, v, f"{v:.3f}", ha="center", va="bottom")
            ax.set_xticks(range(len(names)))
            ax.set_xticklabels(names)
            ax.set_ylim(0, 1.1)
            ax.set_ylabel("test accuracy")
            ax.set_title(f"perturbation: {pert}")
            path = os.path.join(out_dir, f"accuracy_{_slug(pert)}.svg")
            _save(fig, path)
            written.append(path)
    return written


def load_sidecars(paths: Sequence[PathLike]) -> List[dict]:
    records = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            doc = json.load(fh)
        records.extend(doc if isinstance(doc, list) else [doc])
    return records


def trace_chart(records: Sequence[dict], out_dir: PathLike) -> List[str]:
    traced = [r for r in records if r.get("trace")]
    if not traced:
        return []
    written = []
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for r in traced:
            ax.plot(range(len(r["trace"])), r["trace"], linewidth=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel(traced[0].get("objective", "U"))
        path = os.path.join(out_dir, "u_traces.svg")
        _save(fig, path)
        written.append(path)
        diffs = [r["image_difference"] for r in records if "image_difference" in r]
        if diffs:
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.bar(range(len(diffs)), diffs, color="#dd8452")
            ax.set_xlabel("sample")
            ax.set_ylabel("mean |image difference|")
            path = os.path.join(out_dir, "image_difference.svg")
            _save(fig, path)
            written.append(path)
    return written


def plot(metrics_csv: PathLike, out_dir: PathLike, sidecars: Sequence[PathLike] = ()) -> List[str]:
    """Render every chart the inputs support; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = bar_charts(read_metrics(metrics_csv), out_dir) if metrics_csv is not None else []
    if sidecars:
        written += trace_chart(load_sidecars(sidecars), out_dir)
    return written
