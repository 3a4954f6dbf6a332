"""Metric JSON, training curves and confusion-matrix figures."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import EmptySet, UnwritableDirectory  # noqa: E402
from .evaluation import ConfusionMatrix, EvalReport  # noqa: E402
from .train import TrainHistory  # noqa: E402

CURVE_METRICS = ("accuracy", "precision", "recall", "loss")

# No timestamp or version in the PNG so identical figures give identical bytes.
_PNG_METADATA = {"Software": None}


@dataclass(frozen=True)
class ReportBundle:
    metrics_json_path: Path
    curves_image_paths: dict
    confusion_plot_path: Path

    def paths(self) -> list[Path]:
        return [self.metrics_json_path, *self.curves_image_paths.values(), self.confusion_plot_path]


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnwritableDirectory(path, str(exc)) from exc
    return path


def _save(fig, out_path: Path):
    try:
        fig.savefig(out_path, dpi=100, metadata=_PNG_METADATA)
    except OSError as exc:
        raise UnwritableDirectory(out_path.parent, str(exc)) from exc
    finally:
        plt.close(fig)


def plot_curves(history: TrainHistory, out_dir) -> dict[str, Path]:
    """One ``curve_<metric>.png`` per tracked metric, train vs validation."""
    if not history.entries:
        raise EmptySet("cannot plot an empty history")
    out_dir = _ensure_dir(Path(out_dir))
    paths = {}
    for metric in CURVE_METRICS:
        xs, tr, va = history.series(metric)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(xs, tr, marker="o", label="train")
        ax.plot(xs, va, marker="o", label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel(metric)
        ax.set_title(f"{metric}: training vs validation")
        ax.set_xticks(xs if len(xs) <= 20 else xs[:: max(1, len(xs) // 10)])
        if metric != "loss":
            ax.set_ylim(-0.02, 1.02)
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        paths[metric] = out_dir / f"curve_{metric}.png"
        _save(fig, paths[metric])
    return paths


def confusion_cells(cm: ConfusionMatrix) -> list[tuple[int, int, str]]:
    """``(row, col, text)`` annotations drawn on the confusion plot."""
    grid = cm.as_grid()
    return [(i, j, str(int(grid[i, j]))) for i in range(2) for j in range(2)]


def plot_confusion(cm: ConfusionMatrix, out_path) -> Path:
    out_path = Path(out_path)
    _ensure_dir(out_path.parent)
    grid = cm.as_grid()
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(grid, cmap="Blues", vmin=0)
    threshold = grid.max() / 2 if grid.max() else 0.5
    for i, j, text in confusion_cells(cm):
        ax.text(j, i, text, ha="center", va="center", fontsize=14,
                color="white" if grid[i, j] > threshold else "black")
    ax.set_xticks([0, 1], labels=["negative", "positive"])
    ax.set_yticks([0, 1], labels=["negative", "positive"])
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    ax.set_title(f"confusion matrix (n={cm.total})")
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    _save(fig, out_path)
    return out_path


def write_metrics_json(report: EvalReport, out_path) -> Path:
    out_path = Path(out_path)
    _ensure_dir(out_path.parent)
    try:
        # json uses repr for floats, which round-trips exactly
        out_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise UnwritableDirectory(out_path, str(exc)) from exc
    return out_path


def read_metrics_json(path) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        return EvalReport.from_dict(json.load(fh))


def build_report(history: TrainHistory, report: EvalReport, out_dir) -> ReportBundle:
    out_dir = _ensure_dir(Path(out_dir))
    return ReportBundle(
        metrics_json_path=write_metrics_json(report, out_dir / "metrics.json"),
        curves_image_paths=plot_curves(history, out_dir),
        confusion_plot_path=plot_confusion(report.confusion, out_dir / "confusion.png"),
    )
