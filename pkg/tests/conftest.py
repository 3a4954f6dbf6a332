from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

from covxr.dataset import DatasetManifest, SampleRecord
from covxr.model import ModelSpec, build_classifier
from covxr.synthetic import write_synthetic_dataset

STANDIN = ModelSpec(backbone_id="standin")


def make_manifest(n_neg, n_pos, patients=None, tag="t"):
    recs = []
    for i in range(n_neg + n_pos):
        label = 0 if i < n_neg else 1
        pid = patients[i] if patients is not None else ""
        recs.append(SampleRecord(f"/data/img_{i:05d}.png", label, pid))
    return DatasetManifest(tuple(recs), tag)


def write_images(root: Path, n: int, size=(16, 16), channels=1, seed=0):
    """Random 8-bit images; returns their paths."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        shape = size if channels == 1 else (*size, channels)
        arr = rng.integers(0, 256, shape, dtype=np.uint8)
        p = root / f"im_{i:04d}.png"
        Image.fromarray(arr).save(p)
        paths.append(p)
    return paths


@pytest.fixture
def synthetic_root(tmp_path):
    return write_synthetic_dataset(tmp_path / "raw", 6, 6, seed=1, size=64)


@pytest.fixture
def synthetic_manifest(synthetic_root):
    recs = []
    for label, name in ((0, "negative"), (1, "positive")):
        for p in sorted((synthetic_root / name).glob("*.png")):
            recs.append(SampleRecord(str(p), label))
    return DatasetManifest(tuple(recs), "synthetic")


@pytest.fixture
def standin():
    return build_classifier(STANDIN, use_pretrained=False, seed=0)


@pytest.fixture
def standin64():
    return build_classifier(STANDIN, use_pretrained=False, seed=0).double()


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
