"""Input-gradient saliency maps and heat-map overlays."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from matplotlib import colormaps
from PIL import Image

from .errors import NonDifferentiableModel, UnwritableDirectory
from .model import _param_dtype, as_model_input
from .preprocess import BGR, ImageBuffer, resize_array

COLORMAP = "viridis"


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"saliency map must be 2-D, got shape {v.shape}")
        if v.size and (v.min() < 0 or v.max() > 1):
            raise ValueError("saliency values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def source_shape(self) -> tuple[int, int]:
        return self.values.shape


def normalize_map(values) -> np.ndarray:
    """Min-max scale to ``[0, 1]``; an all-zero map stays all-zero."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v) if hi == 0 else np.ones_like(v)
    return (v - lo) / (hi - lo)


def raw_input_gradient(clf, img) -> np.ndarray:
    """``d sigmoid(clf(img)) / d img`` as an ``H x W x 3`` array.

    ``img`` is a preprocessed ``H x W x 3`` array or :class:`ImageBuffer`.
    The spatial size is not restricted to 224 so small probes work.
    """
    if not isinstance(clf, torch.nn.Module):
        raise NonDifferentiableModel(f"expected a torch module, got {type(clf).__name__}")
    arr = img.values if isinstance(img, ImageBuffer) else np.asarray(img)
    x = as_model_input(arr, _param_dtype(clf), size=None).requires_grad_(True)
    was_training = clf.training
    clf.eval()
    try:
        out = clf(x)
        if not torch.is_tensor(out) or out.numel() != 1:
            raise NonDifferentiableModel("model must return one probability per image")
        if out.requires_grad:
            (grad,) = torch.autograd.grad(out.sum(), x, allow_unused=True)
        else:
            grad = None
    except RuntimeError as exc:
        raise NonDifferentiableModel(str(exc)) from exc
    finally:
        clf.train(was_training)
    if grad is None:
        return np.zeros(arr.shape, dtype=np.float64)
    return grad[0].permute(1, 2, 0).detach().double().numpy()


def input_gradient_saliency(clf, img) -> SaliencyMap:
    """Absolute input gradient, max over channels, scaled to ``[0, 1]``."""
    g = np.abs(raw_input_gradient(clf, img)).max(axis=2)
    return SaliencyMap(normalize_map(g))


def _grayscale(original: ImageBuffer) -> np.ndarray:
    v = original.values
    if v.shape[2] == 1:
        return v[:, :, 0]
    rgb = v[:, :, ::-1] if original.channel_order == BGR else v
    return rgb @ np.array([0.299, 0.587, 0.114])


def colorize(values, cmap: str = COLORMAP) -> np.ndarray:
    """Map ``[0, 1]`` values to ``H x W x 3`` RGB in ``[0, 255]``."""
    return colormaps[cmap](np.asarray(values, dtype=np.float64))[..., :3] * 255.0


def overlay(smap: SaliencyMap, original: ImageBuffer, alpha: float = 0.5, cmap: str = COLORMAP) -> np.ndarray:
    """Blend the coloured heat map over a grayscale rendering of ``original``.

    Returns an 8-bit RGB array the size of ``original``; the map is
    bilinearly resampled when the sizes differ.
    """
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    values = smap.values
    if values.shape != (original.height, original.width):
        values = np.clip(resize_array(values, original.height, original.width), 0.0, 1.0)
    gray = np.clip(_grayscale(original), 0, 255)[:, :, None]
    heat = colorize(values, cmap)
    comp = (1 - alpha) * gray + alpha * heat
    return np.clip(np.rint(comp), 0, 255).astype(np.uint8)


def write_overlay(composite: np.ndarray, out_png, alpha: float, cmap: str = COLORMAP, **extra) -> tuple[Path, Path]:
    """Save the composite PNG and a ``.json`` sidecar with the render settings."""
    out_png = Path(out_png)
    sidecar = out_png.with_suffix(".json")
    meta = {"alpha": alpha, "colormap": cmap, **extra}
    try:
        out_png.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(composite).save(out_png)
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise UnwritableDirectory(out_png.parent, str(exc)) from exc
    return out_png, sidecar
