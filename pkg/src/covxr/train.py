"""Adam training loop with per-epoch train/validation tracking."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch

from .dataset import DatasetManifest, batches
from .errors import EmptySet, LengthMismatch, OverlappingSets, UnwritableDirectory
from .evaluation import predict_manifest
from .model import Classifier, _param_dtype, as_model_input, bce_loss, save_checkpoint
from .preprocess import AugmentConfig, train_pipeline

log = logging.getLogger(__name__)

HISTORY_FILE = "history.jsonl"
BEST_CHECKPOINT = "best.pt"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 1e-4
    seed: int = 0
    checkpoint_dir: str = "checkpoints"
    workers: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")


class BinaryRates(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    # names of ratios whose denominator was zero and were reported as 0
    undefined: tuple[str, ...] = ()


def epoch_metrics(labels, probs, threshold: float = 0.5) -> BinaryRates:
    y = np.asarray(labels).astype(np.int64)
    p = np.asarray(probs, dtype=np.float64)
    if y.shape != p.shape or y.ndim != 1:
        raise LengthMismatch(f"labels {y.shape} vs probabilities {p.shape}")
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    pred = p >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    undefined = []
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        undefined.append("precision")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        undefined.append("recall")
    if len(y):
        acc = (tp + tn) / len(y)
    else:
        acc = 0.0
        undefined.append("accuracy")
    return BinaryRates(acc, precision, recall, tuple(undefined))


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    train_accuracy: float
    train_precision: float
    train_recall: float
    val_accuracy: float
    val_precision: float
    val_recall: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "EpochMetrics":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def select_best_epoch(entries) -> int:
    """Epoch with the highest validation accuracy, earliest on ties."""
    if not entries:
        raise EmptySet("history has no epochs")
    best = max(entries, key=lambda e: (e.val_accuracy, -e.epoch))
    return best.epoch


@dataclass(frozen=True)
class TrainHistory:
    entries: tuple[EpochMetrics, ...]
    best_epoch: int
    best_checkpoint_path: str

    def series(self, name: str) -> tuple[list[int], list[float], list[float]]:
        """``(epochs, train_values, val_values)`` for accuracy/precision/recall/loss."""
        xs = [e.epoch for e in self.entries]
        return (
            xs,
            [getattr(e, f"train_{name}") for e in self.entries],
            [getattr(e, f"val_{name}") for e in self.entries],
        )


def read_history(path) -> TrainHistory:
    """Load a history JSON-lines file written by :func:`train`."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        entries = tuple(EpochMetrics.from_dict(json.loads(line)) for line in fh if line.strip())
    if not entries:
        raise EmptySet(f"{path} holds no epochs")
    return TrainHistory(entries, select_best_epoch(entries), str(path.parent / BEST_CHECKPOINT))


def _check_sets(train_set: DatasetManifest, val_set: DatasetManifest):
    if len(train_set) == 0:
        raise EmptySet("training set is empty")
    if len(val_set) == 0:
        raise EmptySet("validation set is empty")
    shared = {r.image_path for r in train_set} & {r.image_path for r in val_set}
    if shared:
        raise OverlappingSets(
            f"{len(shared)} image(s) appear in both training and validation, e.g. {sorted(shared)[0]}"
        )


def _step(clf: Classifier, opt, x, y):
    bn_layers = [m for m in clf.head.modules() if isinstance(m, torch.nn.BatchNorm1d)]
    single = x.shape[0] == 1
    if single:
        # batch statistics are undefined for one sample; use the running ones
        for m in bn_layers:
            m.eval()
    opt.zero_grad(set_to_none=True)
    p = clf(x)
    loss = bce_loss(y, p)
    loss.backward()
    opt.step()
    if single:
        for m in bn_layers:
            m.train()
    return loss.detach(), p.detach()


def train(
    clf: Classifier,
    train_set: DatasetManifest,
    val_set: DatasetManifest,
    cfg: TrainConfig = TrainConfig(),
    augment: AugmentConfig = AugmentConfig(),
    threshold: float = 0.5,
) -> TrainHistory:
    """Fit the trainable parameters of ``clf`` and return the per-epoch history.

    Each epoch streams the augmented training set once in a seeded order,
    then scores the whole validation set with the evaluation pipeline. The
    history is appended to ``checkpoint_dir/history.jsonl`` as it grows and
    the best-validation-accuracy model is saved to ``checkpoint_dir/best.pt``.
    """
    _check_sets(train_set, val_set)
    out = Path(cfg.checkpoint_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        hist_path = out / HISTORY_FILE
        hist_fh = open(hist_path, "w", encoding="utf-8")
    except OSError as exc:
        raise UnwritableDirectory(out, str(exc)) from exc

    best_path = out / BEST_CHECKPOINT
    dtype = _param_dtype(clf)
    pipe = train_pipeline(augment)
    entries = []
    best_acc = -1.0

    with torch.random.fork_rng(devices=[]), hist_fh:
        torch.manual_seed(cfg.seed)
        opt = torch.optim.Adam(clf.trainable_parameters(), lr=cfg.learning_rate)
        for epoch in range(1, cfg.epochs + 1):
            clf.train()
            loss_sum, ys, ps = 0.0, [], []
            for xb, yb in batches(train_set, cfg.batch_size, cfg.seed, pipe, epoch=epoch, workers=cfg.workers):
                x = as_model_input(xb, dtype)
                y = torch.tensor(yb, dtype=dtype)
                loss, p = _step(clf, opt, x, y)
                loss_sum += float(loss) * len(yb)
                ys.append(yb)
                ps.append(p.double().numpy())
            clf.eval()
            y_tr, p_tr = np.concatenate(ys), np.concatenate(ps)
            tr = epoch_metrics(y_tr, p_tr, threshold)

            y_va, p_va = predict_manifest(clf, val_set, augment, cfg.batch_size, cfg.workers)
            va = epoch_metrics(y_va, p_va, threshold)
            m = EpochMetrics(
                epoch=epoch,
                train_loss=loss_sum / len(y_tr),
                val_loss=bce_loss(y_va, p_va),
                train_accuracy=tr.accuracy,
                train_precision=tr.precision,
                train_recall=tr.recall,
                val_accuracy=va.accuracy,
                val_precision=va.precision,
                val_recall=va.recall,
            )
            entries.append(m)
            hist_fh.write(m.to_json() + "\n")
            hist_fh.flush()
            if m.val_accuracy > best_acc:
                best_acc = m.val_accuracy
                save_checkpoint(clf, best_path)
            log.info(
                "epoch %d/%d  loss %.4f  acc %.4f  prec %.4f  rec %.4f | "
                "val_loss %.4f  val_acc %.4f  val_prec %.4f  val_rec %.4f",
                epoch, cfg.epochs, m.train_loss, m.train_accuracy, m.train_precision,
                m.train_recall, m.val_loss, m.val_accuracy, m.val_precision, m.val_recall,
            )

    return TrainHistory(tuple(entries), select_best_epoch(entries), str(best_path))
