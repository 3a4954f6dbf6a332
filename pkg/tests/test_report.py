import json

import pytest
from matplotlib.axes import Axes

from covxr.errors import EmptySet, UnwritableDirectory
from covxr.evaluation import ConfusionMatrix, EvalReport
from covxr.report import (
    build_report,
    confusion_cells,
    plot_confusion,
    plot_curves,
    read_metrics_json,
    write_metrics_json,
)
from covxr.train import EpochMetrics, TrainHistory

REFERENCE_CM = ConfusionMatrix(tp=187, fn=13, tn=195, fp=5)


def history(n):
    entries = tuple(
        EpochMetrics(e, 1.0 / e, 1.2 / e, 0.5 + e / 40, 0.6, 0.7, 0.5 + e / 50, 0.55, 0.65) for e in range(1, n + 1)
    )
    return TrainHistory(entries, n, "best.pt")


@pytest.fixture
def plotted_x(monkeypatch):
    """Record the x data of every line drawn."""
    seen = []
    real = Axes.plot

    def spy(self, x, *args, **kwargs):
        seen.append(list(x))
        return real(self, x, *args, **kwargs)

    monkeypatch.setattr(Axes, "plot", spy)
    return seen


class TestCurves:
    def test_ten_epochs(self, tmp_path, plotted_x):
        paths = plot_curves(history(10), tmp_path)
        assert sorted(paths) == ["accuracy", "loss", "precision", "recall"]
        for metric, p in paths.items():
            assert p.name == f"curve_{metric}.png" and p.stat().st_size > 0
        assert len(plotted_x) == 8
        assert all(x == list(range(1, 11)) for x in plotted_x)

    def test_single_epoch(self, tmp_path, plotted_x):
        paths = plot_curves(history(1), tmp_path)
        assert len(paths) == 4 and all(x == [1] for x in plotted_x)

    def test_empty(self, tmp_path):
        with pytest.raises(EmptySet):
            plot_curves(TrainHistory((), 0, ""), tmp_path)

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "f"
        blocker.write_text("x")
        with pytest.raises(UnwritableDirectory):
            plot_curves(history(2), blocker / "sub")


class TestConfusionPlot:
    def test_cells_reference(self):
        assert confusion_cells(REFERENCE_CM) == [(0, 0, "195"), (0, 1, "5"), (1, 0, "13"), (1, 1, "187")]

    def test_cells_trivial(self):
        texts = sorted(t for _, _, t in confusion_cells(ConfusionMatrix(1, 0, 1, 0)))
        assert texts == ["0", "0", "1", "1"]

    def test_byte_identical(self, tmp_path):
        a = plot_confusion(REFERENCE_CM, tmp_path / "a.png").read_bytes()
        b = plot_confusion(REFERENCE_CM, tmp_path / "b.png").read_bytes()
        assert a == b and len(a) > 0

    def test_curves_byte_identical(self, tmp_path):
        a = plot_curves(history(3), tmp_path / "a")["loss"].read_bytes()
        b = plot_curves(history(3), tmp_path / "b")["loss"].read_bytes()
        assert a == b


class TestMetricsJson:
    def test_roundtrip_full_precision(self, tmp_path):
        rep = EvalReport.from_confusion(REFERENCE_CM)
        path = write_metrics_json(rep, tmp_path / "m.json")
        text = path.read_text(encoding="utf-8")
        assert text.endswith("\n")
        assert read_metrics_json(path) == rep
        d = json.loads(text)
        assert d["accuracy"] == 0.955 and d["sensitivity"] == 0.935 and d["specificity"] == 0.975
        assert round(d["f1_paper"], 4) == 0.9546
        assert d["confusion"] == {"tp": 187, "fn": 13, "tn": 195, "fp": 5}

    def test_unwritable_names_path(self, tmp_path):
        blocker = tmp_path / "f"
        blocker.write_text("x")
        with pytest.raises(UnwritableDirectory, match="f"):
            write_metrics_json(EvalReport.from_confusion(REFERENCE_CM), blocker / "m.json")


def test_bundle_files_exist(tmp_path):
    bundle = build_report(history(4), EvalReport.from_confusion(REFERENCE_CM), tmp_path / "r")
    assert len(bundle.paths()) == 6
    assert all(p.exists() and p.stat().st_size > 0 for p in bundle.paths())
