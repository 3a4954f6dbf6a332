import json
import subprocess
import sys

import pytest

from covxr.cli import main
from covxr.config import ConfigError, RunConfig, build_config, load_config, parse_pairs
from covxr.dataset import load_manifest
from covxr.model import build_classifier, save_checkpoint
from covxr.synthetic import write_synthetic_dataset

from conftest import STANDIN

STANDIN_FLAGS = ["--set", "model.backbone_id=standin", "--set", "model.pretrained=false"]


@pytest.fixture
def checkpoint(tmp_path):
    return save_checkpoint(build_classifier(STANDIN, use_pretrained=False, seed=0), tmp_path / "m.pt")


class TestConfig:
    def test_defaults_complete(self):
        keys = dict(RunConfig().items())
        assert keys["train.epochs"] == 10 and keys["train.batch_size"] == 64
        assert keys["train.learning_rate"] == 1e-4 and keys["eval.threshold"] == 0.5
        assert keys["augment.zoom_max"] == 1.3 and keys["model.backbone_id"] == "resnet50-imagenet"

    def test_file_then_override(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\ntrain.epochs=3\nseed=4\naugment.channel_means=1,2,3\n")
        cfg = load_config(p, {"train.epochs": "5"})
        assert cfg.train.epochs == 5 and cfg.seed == 4
        assert cfg.augment.channel_means == (1.0, 2.0, 3.0)

    def test_snapshot_roundtrip(self, tmp_path):
        cfg = build_config({"seed": "9", "model.dropout_rate": "0.25", "model.pretrained": "no"})
        path = cfg.write_snapshot(tmp_path)
        assert load_config(path) == cfg

    def test_errors(self):
        with pytest.raises(ConfigError, match="unknown"):
            build_config({"train.epoch": "3"})
        with pytest.raises(ConfigError):
            build_config({"train.epochs": "three"})
        with pytest.raises(ConfigError):
            build_config({"train.epochs": "0"})
        with pytest.raises(ConfigError):
            parse_pairs("no equals sign")


class TestPrepare:
    def test_six_images(self, tmp_path, capsys):
        raw = write_synthetic_dataset(tmp_path / "raw", 3, 3, size=32)
        out = tmp_path / "m.csv"
        assert main(["prepare", str(raw), str(out)]) == 0
        m = load_manifest(out)
        assert len(m) == 6 and m.class_counts() == {0: 3, 1: 3}
        assert "total: 6" in capsys.readouterr().out

    def test_unknown_class(self, tmp_path, capsys):
        raw = write_synthetic_dataset(tmp_path / "raw", 1, 1, size=32)
        (raw / "pneumonia").mkdir()
        assert main(["prepare", str(raw), str(tmp_path / "m.csv")]) == 2
        assert "pneumonia" in capsys.readouterr().err


class TestPipeline:
    def test_train_evaluate_report(self, tmp_path, capsys):
        raw = write_synthetic_dataset(tmp_path / "raw", 4, 4, size=32)
        manifest = tmp_path / "m.csv"
        assert main(["prepare", str(raw), str(manifest)]) == 0
        run = tmp_path / "run"
        rc = main(["train", str(manifest), "--out-dir", str(run), "--set", "train.epochs=1",
                   "--set", "train.batch_size=4", *STANDIN_FLAGS])
        assert rc == 0
        assert len((run / "history.jsonl").read_text().splitlines()) == 1
        snap = load_config(run / "run_config.txt")
        assert snap.train.epochs == 1 and snap.model.backbone_id == "standin"
        assert (run / "best.pt").exists()

        ev = tmp_path / "eval"
        assert main(["evaluate", str(run / "best.pt"), str(manifest), "--out-dir", str(ev)]) == 0
        metrics = json.loads((ev / "metrics.json").read_text())
        assert metrics["n_samples"] == 8 and (ev / "confusion.png").stat().st_size > 0

        rep = tmp_path / "rep"
        assert main(["report", str(run / "history.jsonl"), str(ev / "metrics.json"), "--out-dir", str(rep)]) == 0
        assert len(list(rep.glob("curve_*.png"))) == 4

    def test_predict_one_line(self, tmp_path, checkpoint, capsys):
        raw = write_synthetic_dataset(tmp_path / "raw", 1, 0, size=40)
        img = next((raw / "negative").glob("*.png"))
        assert main(["predict", str(checkpoint), str(img)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 1
        path, p, label = lines[0].split(" ")
        assert path == str(img) and 0 < float(p) < 1 and label in ("0", "1")
        assert int(label) == int(float(p) >= 0.5)

    def test_saliency(self, tmp_path, checkpoint):
        raw = write_synthetic_dataset(tmp_path / "raw", 0, 1, size=40)
        img = next((raw / "positive").glob("*.png"))
        out = tmp_path / "s" / "sal.png"
        assert main(["saliency", str(checkpoint), str(img), str(out), "--alpha", "0.3"]) == 0
        meta = json.loads(out.with_suffix(".json").read_text())
        assert meta["alpha"] == 0.3 and meta["colormap"] == "viridis" and len(meta["checkpoint_sha256"]) == 64

    def test_bad_inputs_exit_2(self, tmp_path, checkpoint):
        assert main(["predict", str(checkpoint), str(tmp_path / "missing.png")]) == 2
        assert main(["predict", str(tmp_path / "missing.pt"), str(tmp_path / "x.png")]) == 2
        assert main(["train", str(tmp_path / "nope.csv"), "--set", "train.bogus=1"]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "covxr", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "prepare" in out.stdout
