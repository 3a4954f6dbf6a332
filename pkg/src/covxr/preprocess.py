"""Image preprocessing primitives and the train/eval pipelines.

Images are carried as :class:`ImageBuffer`, a thin wrapper over an
``H x W x C`` float64 array that also records the channel order. Every
primitive returns a new buffer; inputs are never modified in place.

The training chain is::

    to_three_channels -> zoom_center_crop -> resize_bilinear(224, 224)
        -> vertical_flip (random) -> reverse_channels -> standardize

and evaluation drops the zoom and the flip.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateCrop, UnsupportedChannelCount, WrongChannelOrder

RGB = "RGB"
BGR = "BGR"

MIN_SIDE = 8
TARGET_SIZE = 224

# Per-channel means of the ImageNet training set, BGR order, 0..255 scale.
IMAGENET_BGR_MEANS = (103.939, 116.779, 123.68)


@dataclass(frozen=True)
class ImageBuffer:
    values: np.ndarray
    channel_order: str = RGB

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3:
            raise ValueError(f"expected an H x W x C array, got shape {v.shape}")
        if self.channel_order not in (RGB, BGR):
            raise ValueError(f"unknown channel order {self.channel_order!r}")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def with_values(self, values, channel_order=None) -> "ImageBuffer":
        return replace(
            self,
            values=values,
            channel_order=self.channel_order if channel_order is None else channel_order,
        )


@dataclass(frozen=True)
class AugmentConfig:
    target_size: int = TARGET_SIZE
    zoom_max: float = 1.3
    flip_probability: float = 0.5
    channel_means: tuple[float, float, float] = field(default=IMAGENET_BGR_MEANS)

    def __post_init__(self):
        if self.zoom_max < 1:
            raise ValueError(f"zoom_max must be >= 1, got {self.zoom_max}")
        if self.target_size < MIN_SIDE:
            raise ValueError(f"target_size must be >= {MIN_SIDE}, got {self.target_size}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip_probability must lie in [0, 1], got {self.flip_probability}")
        means = tuple(float(m) for m in self.channel_means)
        if len(means) != 3:
            raise ValueError("channel_means needs exactly 3 values")
        object.__setattr__(self, "channel_means", means)


def _check_min_side(img: ImageBuffer):
    if img.height < MIN_SIDE or img.width < MIN_SIDE:
        raise ValueError(
            f"image is {img.height}x{img.width}; both sides must be >= {MIN_SIDE}"
        )


def to_three_channels(img: ImageBuffer) -> ImageBuffer:
    """Replicate a grayscale image into three identical channels."""
    if img.channels == 3:
        return img
    if img.channels == 1:
        return img.with_values(np.repeat(img.values, 3, axis=2))
    raise UnsupportedChannelCount(f"expected 1 or 3 channels, got {img.channels}")


def reverse_channels(img: ImageBuffer) -> ImageBuffer:
    """RGB <-> BGR by reversing the channel axis."""
    if img.channels != 3:
        raise UnsupportedChannelCount(f"channel reversal needs 3 channels, got {img.channels}")
    flipped = BGR if img.channel_order == RGB else RGB
    return img.with_values(img.values[:, :, ::-1].copy(), channel_order=flipped)


def crop_box(height: int, width: int, factor: float) -> tuple[int, int, int, int]:
    """Return ``(top, left, crop_h, crop_w)`` of the centred zoom crop."""
    if factor < 1:
        raise ValueError(f"zoom factor must be >= 1, got {factor}")
    ch = int(np.floor(height / factor))
    cw = int(np.floor(width / factor))
    if ch < MIN_SIDE or cw < MIN_SIDE:
        raise DegenerateCrop(
            f"zoom {factor} on {height}x{width} leaves {ch}x{cw} (< {MIN_SIDE})"
        )
    return (height - ch) // 2, (width - cw) // 2, ch, cw


def zoom_center_crop(img: ImageBuffer, factor: float) -> ImageBuffer:
    """Keep the central ``1/factor`` of each side."""
    if factor == 1:
        if img.height < MIN_SIDE or img.width < MIN_SIDE:
            raise DegenerateCrop(f"{img.height}x{img.width} image is below {MIN_SIDE} px")
        return img
    top, left, ch, cw = crop_box(img.height, img.width, factor)
    return img.with_values(img.values[top : top + ch, left : left + cw].copy())


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres, edge clamped
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_array(values: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear resize of an ``H x W [x C]`` array to ``h x w``."""
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 2
    if squeeze:
        values = values[:, :, None]
    H, W = values.shape[:2]
    if (H, W) == (h, w):
        out = values.copy()
    else:
        r0, r1, fr = _axis_weights(H, h)
        c0, c1, fc = _axis_weights(W, w)
        fr = fr[:, None, None]
        fc = fc[None, :, None]
        top = values[r0][:, c0] * (1 - fc) + values[r0][:, c1] * fc
        bottom = values[r1][:, c0] * (1 - fc) + values[r1][:, c1] * fc
        out = top * (1 - fr) + bottom * fr
    return out[:, :, 0] if squeeze else out


def resize_bilinear(img: ImageBuffer, h: int, w: int) -> ImageBuffer:
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(f"target size {h}x{w} is below {MIN_SIDE} px")
    return img.with_values(resize_array(img.values, h, w))


def vertical_flip(img: ImageBuffer) -> ImageBuffer:
    """Reverse the row order (top becomes bottom)."""
    return img.with_values(img.values[::-1].copy())


def standardize(img: ImageBuffer, means) -> ImageBuffer:
    """Subtract per-channel means from a BGR image."""
    if img.channels != 3:
        raise UnsupportedChannelCount(f"standardize needs 3 channels, got {img.channels}")
    if img.channel_order != BGR:
        raise WrongChannelOrder(f"standardize expects BGR input, got {img.channel_order}")
    m = np.asarray(means, dtype=np.float64).reshape(1, 1, 3)
    return img.with_values(img.values - m)


def augment_train(img: ImageBuffer, rng_seed: int, cfg: AugmentConfig = AugmentConfig()) -> ImageBuffer:
    """Random zoom-crop and flip followed by the fixed backbone conversion.

    The zoom factor is drawn from ``Uniform[1, cfg.zoom_max]`` and the flip
    happens with probability ``cfg.flip_probability``; both draws come from
    ``rng_seed`` alone, so equal seeds give bit-identical outputs.
    """
    _check_min_side(img)
    rng = np.random.default_rng(rng_seed)
    factor = rng.uniform(1.0, cfg.zoom_max) if cfg.zoom_max > 1 else 1.0
    do_flip = rng.random() < cfg.flip_probability

    out = to_three_channels(img)
    out = zoom_center_crop(out, factor)
    out = resize_bilinear(out, cfg.target_size, cfg.target_size)
    if do_flip:
        out = vertical_flip(out)
    out = reverse_channels(out)
    return standardize(out, cfg.channel_means)


def preprocess_eval(img: ImageBuffer, cfg: AugmentConfig = AugmentConfig()) -> ImageBuffer:
    _check_min_side(img)
    out = to_three_channels(img)
    out = resize_bilinear(out, cfg.target_size, cfg.target_size)
    out = reverse_channels(out)
    return standardize(out, cfg.channel_means)


def train_pipeline(cfg: AugmentConfig = AugmentConfig()):
    """Return ``f(img, seed) -> ImageBuffer`` suitable for :func:`covxr.dataset.batches`."""

    def pipeline(img, seed):
        return augment_train(img, seed, cfg)

    return pipeline


def eval_pipeline(cfg: AugmentConfig = AugmentConfig()):
    def pipeline(img, seed=None):
        return preprocess_eval(img, cfg)

    return pipeline
