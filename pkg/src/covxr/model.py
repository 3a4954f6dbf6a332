"""Classifier assembly: pretrained backbone, pooling head, loss and checkpoints.

Layout of the network::

    backbone feature maps -> global average pool -> dense(head_width) + ReLU
        -> batch norm -> dropout -> dense(1) -> sigmoid

Images enter as ``N x 224 x 224 x 3`` BGR arrays with the channel means
subtracted (the output of :func:`covxr.preprocess.preprocess_eval`).
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import (
    IncompatibleSpec,
    LengthMismatch,
    SerializationFailure,
    ShapeMismatch,
    UnknownBackbone,
    WeightLoadFailure,
)
from .preprocess import IMAGENET_BGR_MEANS

EPS = 1e-7
INPUT_SIZE = 224
CHECKPOINT_FORMAT = "covxr-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    backbone_id: str = "resnet50-imagenet"
    freeze_backbone: bool = True
    head_width: int = 256
    dropout_rate: float = 0.5
    input_size: int = INPUT_SIZE

    def __post_init__(self):
        if self.head_width < 1:
            raise ValueError(f"head_width must be >= 1, got {self.head_width}")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.input_size != INPUT_SIZE:
            raise ValueError(f"input_size is fixed at {INPUT_SIZE}, got {self.input_size}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise IncompatibleSpec(f"unknown ModelSpec fields: {sorted(unknown)}")
        return cls(**d)


class CaffeToTorchvision(nn.Module):
    """Map mean-subtracted BGR pixels to torchvision's normalised RGB input.

    torchvision's ImageNet weights expect RGB in ``[0, 1]`` normalised by
    per-channel mean/std, while the pipeline hands over BGR with the BGR
    means subtracted. The conversion is a fixed per-channel affine map.
    """

    def __init__(self, bgr_means=IMAGENET_BGR_MEANS):
        super().__init__()
        rgb_means = torch.tensor(bgr_means[::-1], dtype=torch.float32).view(1, 3, 1, 1)
        mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
        self.register_buffer("rgb_means", rgb_means, persistent=False)
        self.register_buffer("mean", mean, persistent=False)
        self.register_buffer("std", std, persistent=False)

    def forward(self, x):
        rgb = x.flip(1) + self.rgb_means
        return (rgb / 255.0 - self.mean) / self.std


def _resnet50(use_pretrained: bool) -> tuple[nn.Module, int]:
    from torchvision.models import ResNet50_Weights, resnet50

    weights = None
    if use_pretrained:
        weights = ResNet50_Weights.IMAGENET1K_V1
        cache = os.environ.get("COVXR_CACHE")
        if cache:
            torch.hub.set_dir(cache)
    try:
        net = resnet50(weights=weights)
    except Exception as exc:  # network, cache or hash errors
        raise WeightLoadFailure(f"could not load ResNet50 ImageNet weights: {exc}") from exc
    trunk = nn.Sequential(
        CaffeToTorchvision(),
        net.conv1, net.bn1, net.relu, net.maxpool,
        net.layer1, net.layer2, net.layer3, net.layer4,
    )
    return trunk, net.fc.in_features


def _standin(use_pretrained: bool) -> tuple[nn.Module, int]:
    # Small random conv stack for offline tests; there are no pretrained weights.
    trunk = nn.Sequential(
        Scale(1 / 64.0),
        nn.Conv2d(3, 16, kernel_size=5, stride=4, padding=2),
        nn.ReLU(),
        nn.Conv2d(16, 32, kernel_size=3, stride=2, padding=1),
        nn.ReLU(),
        nn.Conv2d(32, 64, kernel_size=3, stride=2, padding=1),
        nn.ReLU(),
    )
    for m in trunk.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
            nn.init.zeros_(m.bias)
    return trunk, 64


class Scale(nn.Module):
    def __init__(self, factor: float):
        super().__init__()
        self.factor = factor

    def forward(self, x):
        return x * self.factor


BACKBONES = {
    "resnet50-imagenet": _resnet50,
    "standin": _standin,
}


class Classifier(nn.Module):
    """Backbone plus binary head; ``forward`` returns probabilities."""

    def __init__(self, spec: ModelSpec, backbone: nn.Module, feature_width: int):
        super().__init__()
        self.spec = spec
        self.feature_width = feature_width
        self.backbone = backbone
        self.head = nn.Sequential(
            nn.Linear(feature_width, spec.head_width),
            nn.ReLU(),
            nn.BatchNorm1d(spec.head_width),
            nn.Dropout(spec.dropout_rate),
            nn.Linear(spec.head_width, 1),
        )
        if spec.freeze_backbone:
            for p in self.backbone.parameters():
                p.requires_grad_(False)

    @property
    def training_mode(self) -> bool:
        return self.training

    def train(self, mode: bool = True):
        super().train(mode)
        if self.spec.freeze_backbone:
            # frozen backbone keeps its batch-norm statistics fixed
            self.backbone.eval()
        return self

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x).mean(dim=(2, 3))

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        """``x`` is ``N x 3 x H x W``; returns ``N`` logits."""
        return self.head(self.features(x)).squeeze(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(x))

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def parameter_digest(self, part: str = "all") -> str:
        """SHA-256 over parameters and buffers of ``backbone``, ``head`` or ``all``."""
        module = {"all": self, "backbone": self.backbone, "head": self.head}[part]
        h = hashlib.sha256()
        for name, t in sorted(module.state_dict().items()):
            h.update(name.encode())
            h.update(t.detach().cpu().contiguous().numpy().tobytes())
        return h.hexdigest()


def build_classifier(spec: ModelSpec = ModelSpec(), use_pretrained: bool = True, seed: int = 0) -> Classifier:
    """Construct a classifier; head (and any random backbone) is seeded by ``seed``.

    ``use_pretrained=False`` gives the same architecture with random weights,
    which is what checkpoint loading and offline tests use.
    """
    try:
        factory = BACKBONES[spec.backbone_id]
    except KeyError:
        raise UnknownBackbone(
            f"unknown backbone {spec.backbone_id!r}; available: {sorted(BACKBONES)}"
        ) from None
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        backbone, width = factory(use_pretrained)
        clf = Classifier(spec, backbone, width)
    return clf.eval()


def as_model_input(batch, dtype=torch.float32, size: int = INPUT_SIZE) -> torch.Tensor:
    """``N x H x W x 3`` (or a single ``H x W x 3``) array -> ``N x 3 x H x W`` tensor."""
    if torch.is_tensor(batch):
        x = batch
    else:
        arr = np.asarray(batch)
        x = torch.from_numpy(arr if arr.flags.writeable else arr.copy())
    if x.ndim == 3:
        x = x.unsqueeze(0)
    if x.ndim != 4 or (size is not None and tuple(x.shape[1:]) != (size, size, 3)):
        want = f"(N, {size}, {size}, 3)" if size is not None else "(N, H, W, 3)"
        raise ShapeMismatch(f"expected preprocessed images of shape {want}, got {tuple(x.shape)}")
    if size is None and x.shape[-1] != 3:
        raise ShapeMismatch(f"expected 3 channels, got {tuple(x.shape)}")
    return x.permute(0, 3, 1, 2).to(dtype).contiguous()


def _param_dtype(clf: nn.Module):
    for p in clf.parameters():
        return p.dtype
    return torch.float32


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    p = np.empty_like(z)
    pos = z >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    p[~pos] = ez / (1.0 + ez)
    # keep strictly inside (0, 1) even when the logit saturates
    return np.clip(p, np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0))


@torch.no_grad()
def predict_proba(clf: Classifier, batch) -> np.ndarray:
    """Probability of the positive class for each preprocessed image.

    Images are forwarded one at a time: batched CPU kernels round
    differently by row position, and a prediction must not depend on what
    else shares its batch.
    """
    x = as_model_input(batch, _param_dtype(clf))
    was_training = clf.training
    clf.eval()
    try:
        z = torch.cat([clf.logits(x[i : i + 1]) for i in range(len(x))])
    finally:
        clf.train(was_training)
    return _stable_sigmoid(z.double().cpu().numpy())


def bce_loss(y, p, eps: float = EPS):
    """Mean binary cross-entropy with ``p`` clamped to ``[eps, 1 - eps]``.

    Tensors in give a differentiable tensor out; anything else is evaluated
    in float64 and returned as a Python float.
    """
    if torch.is_tensor(p):
        y = torch.as_tensor(y, dtype=p.dtype, device=p.device)
        if y.shape != p.shape:
            raise LengthMismatch(f"labels {tuple(y.shape)} vs probabilities {tuple(p.shape)}")
        if p.numel() == 0:
            raise LengthMismatch("empty batch")
        pc = p.clamp(eps, 1 - eps)
        return -(y * torch.log(pc) + (1 - y) * torch.log(1 - pc)).mean()
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise LengthMismatch(f"labels {y.shape} vs probabilities {p.shape}")
    if p.size == 0:
        raise LengthMismatch("empty batch")
    pc = np.clip(p, eps, 1 - eps)
    return float(-np.mean(y * np.log(pc) + (1 - y) * np.log1p(-pc)))


def save_checkpoint(clf: Classifier, path) -> Path:
    """Write spec, parameters and batch-norm statistics to ``path``."""
    path = Path(path)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": asdict(clf.spec),
        "dtype": str(_param_dtype(clf)).replace("torch.", ""),
        "state_dict": {k: v.detach().cpu() for k, v in clf.state_dict().items()},
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        os.close(fd)
        torch.save(payload, tmp)
        os.replace(tmp, path)
    except OSError as exc:
        raise SerializationFailure(f"could not write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path, expected_spec: ModelSpec | None = None) -> Classifier:
    """Rebuild a classifier from :func:`save_checkpoint` output.

    Passing ``expected_spec`` asserts the stored architecture matches it.
    """
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise SerializationFailure(f"could not read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise SerializationFailure(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise SerializationFailure(f"{path}: unsupported checkpoint version {payload.get('version')}")
    spec = ModelSpec.from_dict(payload["spec"])
    if expected_spec is not None and spec != expected_spec:
        raise IncompatibleSpec(f"checkpoint spec {spec} does not match expected {expected_spec}")
    clf = build_classifier(spec, use_pretrained=False)
    clf.to(getattr(torch, payload.get("dtype", "float32")))
    try:
        clf.load_state_dict(payload["state_dict"], strict=True)
    except (RuntimeError, KeyError) as exc:
        raise IncompatibleSpec(f"checkpoint parameters do not fit {spec}: {exc}") from exc
    return clf.eval()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
