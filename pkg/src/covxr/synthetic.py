"""Synthetic chest-X-ray-like images for tests and demos.

Each image is a blurred torso with two dark lung fields and sensor noise;
positives additionally carry a few bright patchy opacities inside the
lungs. They are not medical data and exist only so the pipeline can run
without the real corpus.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def synthetic_cxr(rng: np.random.Generator, label: int, size: int = 96) -> np.ndarray:
    """Return a ``size x size`` uint8 grayscale image."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    body = 90 + 40 * np.exp(-((xx - 0.5) ** 2) / 0.08)
    lungs = np.zeros_like(body)
    for cx in (0.3, 0.7):
        lungs += np.exp(-(((xx - cx) / 0.14) ** 2 + ((yy - 0.5) / 0.28) ** 2))
    img = body - 70 * lungs + rng.normal(0, 6, (size, size))
    if label:
        for _ in range(rng.integers(3, 7)):
            cx = rng.choice([0.3, 0.7]) + rng.normal(0, 0.06)
            cy = rng.uniform(0.3, 0.75)
            r = rng.uniform(0.04, 0.09)
            img += rng.uniform(40, 70) * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r))
    return np.clip(img, 0, 255).astype(np.uint8)


def write_synthetic_dataset(root, n_negative: int, n_positive: int, seed: int = 0, size: int = 96) -> Path:
    """Write ``root/negative/*.png`` and ``root/positive/*.png``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for label, name, n in ((0, "negative", n_negative), (1, "positive", n_positive)):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            Image.fromarray(synthetic_cxr(rng, label, size)).save(d / f"{name}_{i:04d}.png")
    return root
