# Where does an (untrained) stand-in model look? Render an input-gradient overlay.
import tempfile
from pathlib import Path

import numpy as np

from covxr.model import ModelSpec, build_classifier, predict_proba
from covxr.preprocess import ImageBuffer, preprocess_eval
from covxr.saliency import input_gradient_saliency, overlay, write_overlay
from covxr.synthetic import synthetic_cxr

film = ImageBuffer(synthetic_cxr(np.random.default_rng(3), label=1, size=256).astype(np.float64))
clf = build_classifier(ModelSpec(backbone_id="standin"), use_pretrained=False, seed=0)

x = preprocess_eval(film)
print("p(positive) =", predict_proba(clf, x.values[None])[0])

smap = input_gradient_saliency(clf, x)
print("map", smap.source_shape, "range", smap.values.min(), smap.values.max())

# The map lives at 224x224; overlay resamples it back onto the 256x256 film.
out = Path(tempfile.mkdtemp(prefix="covxr-sal-")) / "overlay.png"
for alpha in (0.0, 0.5, 1.0):
    comp = overlay(smap, film, alpha=alpha)
    print(f"alpha {alpha}: composite {comp.shape} {comp.dtype} mean {comp.mean():.1f}")
png, sidecar = write_overlay(overlay(smap, film, alpha=0.5), out, alpha=0.5)
print(png, sidecar)
