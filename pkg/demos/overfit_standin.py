# Train the small stand-in network on 32 synthetic films and watch it memorise them.
import logging
import tempfile
from pathlib import Path

import torch

from covxr.dataset import DatasetManifest, SampleRecord
from covxr.model import ModelSpec, build_classifier
from covxr.report import plot_curves
from covxr.synthetic import write_synthetic_dataset
from covxr.train import TrainConfig, train

logging.basicConfig(level=logging.INFO, format="%(message)s")
torch.set_num_threads(1)

work = Path(tempfile.mkdtemp(prefix="covxr-demo-"))
root = write_synthetic_dataset(work / "raw", 20, 20, seed=0)

def records(folder, label, sl):
    return [SampleRecord(str(p), label) for p in sorted((root / folder).glob("*.png"))[sl]]

train_set = DatasetManifest(tuple(records("negative", 0, slice(16)) + records("positive", 1, slice(16))))
val_set = DatasetManifest(tuple(records("negative", 0, slice(16, None)) + records("positive", 1, slice(16, None))))

clf = build_classifier(ModelSpec(backbone_id="standin"), use_pretrained=False, seed=0)
cfg = TrainConfig(epochs=50, batch_size=64, learning_rate=1e-3, checkpoint_dir=str(work / "run"))
history = train(clf, train_set, val_set, cfg)

print("final train accuracy", history.entries[-1].train_accuracy)
print("best epoch", history.best_epoch, "->", history.best_checkpoint_path)
for metric, path in plot_curves(history, work / "curves").items():
    print(metric, path)
