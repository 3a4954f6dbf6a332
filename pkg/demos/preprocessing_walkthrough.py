# Walk one synthetic chest film through the training and evaluation pipelines.
import numpy as np

from covxr.preprocess import (
    AugmentConfig,
    ImageBuffer,
    augment_train,
    crop_box,
    preprocess_eval,
    zoom_center_crop,
)
from covxr.synthetic import synthetic_cxr

rng = np.random.default_rng(0)
film = ImageBuffer(synthetic_cxr(rng, label=1, size=512).astype(np.float64))
print("raw film", film.shape, film.channel_order)

# A zoom of 1.3 keeps the central floor(512 / 1.3) = 393 pixels on each side.
print("crop box at 1.3:", crop_box(512, 512, 1.3))
print("cropped", zoom_center_crop(film, 1.3).shape)

# Evaluation is deterministic: resize, go to BGR, subtract the channel means.
x = preprocess_eval(film)
print("eval input", x.shape, x.channel_order, "per-channel mean", x.values.mean(axis=(0, 1)).round(2))

# Training draws a zoom factor and a flip from the per-image seed.
cfg = AugmentConfig()
for seed in range(4):
    a = augment_train(film, seed, cfg)
    print(f"seed {seed}: mean {a.values.mean():8.3f}  top-row mean {a.values[0].mean():8.3f}")

# With zoom and flip switched off the two pipelines agree exactly.
plain = AugmentConfig(zoom_max=1.0, flip_probability=0.0)
print("degenerate augment == eval:", np.array_equal(augment_train(film, 7, plain).values, x.values))
