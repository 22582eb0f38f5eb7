"""Render metrics JSON-lines files to PNG figures and a CSV summary."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import FormatError  # noqa: E402

SUMMARY_COLUMNS = [
    "run",
    "iterations",
    "total_wall_ms",
    "initial_param_count",
    "final_param_count",
    "reduction_ratio",
    "apoptosis_events",
    "final_test_accuracy",
    "final_test_auc",
    "speedup_whole_run",
    "speedup_epoch",
]

# panel key, y label, log scale
PANELS = [
    ("train_loss", "training loss", True),
    ("test_accuracy", "test accuracy", False),
    ("param_count", "parameters", True),
]

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def read_metrics(path: "str | Path") -> tuple[list[dict], dict | None]:
    """Records and the trailing summary (if any) of one metrics file."""
    records, summary = [], None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: {exc.msg}", offset=lineno) from None
            if rec.get("kind") == "summary":
                summary = rec
            else:
                records.append(rec)
    if not records:
        raise FormatError(f"{path}: no metrics records", offset=0)
    return records, summary


def plot_runs(runs: dict[str, list[dict]], out_dir: "str | Path") -> list[Path]:
    """One figure per panel with every run overlaid; apoptosis events marked."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(STYLE):
        for key, label, logy in PANELS:
            fig, ax = plt.subplots(figsize=(5.0, 3.2))
            plotted = False
            for name, records in runs.items():
                pts = [(r["iteration"], r[key]) for r in records if r.get(key) is not None]
                if not pts:
                    continue
                xs, ys = zip(*pts)
                (line,) = ax.plot(xs, ys, label=name, lw=1.2)
                for r in records:
                    if r["kind"] == "apoptosis":
                        ax.axvline(r["iteration"], color=line.get_color(), lw=0.6, ls=":", alpha=0.6)
                plotted = True
            if not plotted:
                plt.close(fig)
                continue
            if logy:
                ax.set_yscale("log")
            ax.set_xlabel("iteration")
            ax.set_ylabel(label)
            ax.legend()
            fig.tight_layout()
            path = out_dir / f"{key}.png"
            fig.savefig(path)
            plt.close(fig)
            written.append(path)
    return written


def write_summary_csv(summaries: dict[str, dict], path: "str | Path") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for name, s in summaries.items():
            w.writerow({"run": name, **s})


def render(paths, out_dir: "str | Path") -> list[Path]:
    """Figures plus ``summary.csv`` for the given metrics files."""
    runs, summaries = {}, {}
    for p in paths:
        name = Path(p).stem
        records, summary = read_metrics(p)
        runs[name] = records
        if summary is not None:
            summaries[name] = summary
    written = plot_runs(runs, out_dir)
    csv_path = Path(out_dir) / "summary.csv"
    write_summary_csv(summaries, csv_path)
    return written + [csv_path]
