"""Confusion matrix and test-set metrics.

``f1_paper`` is the harmonic mean of sensitivity and specificity, which is
what the CovXR results report as "F1". The usual precision/recall F1 is
kept alongside as ``f1_conventional`` so the two are never confused.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import batches
from .errors import (
    BothZero,
    EmptyMatrix,
    EmptySet,
    LengthMismatch,
    MissingClass,
    NoNegatives,
    NoPositives,
)
from .model import predict_proba
from .preprocess import AugmentConfig, eval_pipeline


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    tn: int
    fp: int

    def __post_init__(self):
        for name in ("tp", "fn", "tn", "fp"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.tn + self.fp

    def as_grid(self) -> np.ndarray:
        """Rows are actual (negative, positive), columns predicted (negative, positive)."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]], dtype=np.int64)


def _check_pair(labels, probs):
    y = np.asarray(labels)
    p = np.asarray(probs, dtype=np.float64)
    if y.ndim != 1 or p.ndim != 1 or len(y) != len(p):
        raise LengthMismatch(f"labels {y.shape} and probabilities {p.shape} must be equal-length vectors")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return y.astype(np.int64), p


def confusion(labels, probs, threshold: float = 0.5) -> ConfusionMatrix:
    """Count outcomes; a probability equal to ``threshold`` predicts positive."""
    y, p = _check_pair(labels, probs)
    if len(y) == 0:
        raise LengthMismatch("need at least one sample")
    pred = p >= threshold
    pos = y == 1
    return ConfusionMatrix(
        tp=int(np.sum(pred & pos)),
        fn=int(np.sum(~pred & pos)),
        tn=int(np.sum(~pred & ~pos)),
        fp=int(np.sum(pred & ~pos)),
    )


def sensitivity(cm: ConfusionMatrix) -> float:
    if cm.positives == 0:
        raise NoPositives("sensitivity is undefined without positive samples")
    return cm.tp / cm.positives


def specificity(cm: ConfusionMatrix) -> float:
    if cm.negatives == 0:
        raise NoNegatives("specificity is undefined without negative samples")
    return cm.tn / cm.negatives


def f1_paper(sens: float, spec: float) -> float:
    if sens + spec <= 0:
        raise BothZero("harmonic mean undefined when both rates are zero")
    return 2 * sens * spec / (sens + spec)


def f1_conventional(cm: ConfusionMatrix) -> float:
    """Precision/recall F1, ``2tp / (2tp + fp + fn)``; 0 when undefined."""
    denom = 2 * cm.tp + cm.fp + cm.fn
    return 2 * cm.tp / denom if denom else 0.0


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyMatrix("accuracy of an empty matrix")
    return (cm.tp + cm.tn) / cm.total


@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    sensitivity: float
    specificity: float
    f1_paper: float
    f1_conventional: float
    accuracy: float
    threshold: float
    n_samples: int

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, threshold: float = 0.5) -> "EvalReport":
        sens, spec = sensitivity(cm), specificity(cm)
        return cls(
            confusion=cm,
            sensitivity=sens,
            specificity=spec,
            f1_paper=f1_paper(sens, spec),
            f1_conventional=f1_conventional(cm),
            accuracy=accuracy(cm),
            threshold=float(threshold),
            n_samples=cm.total,
        )

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "n_samples": self.n_samples,
            "confusion": asdict(self.confusion),
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "f1_paper": self.f1_paper,
            "f1_conventional": self.f1_conventional,
            "accuracy": self.accuracy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            confusion=ConfusionMatrix(**d["confusion"]),
            sensitivity=float(d["sensitivity"]),
            specificity=float(d["specificity"]),
            f1_paper=float(d["f1_paper"]),
            f1_conventional=float(d["f1_conventional"]),
            accuracy=float(d["accuracy"]),
            threshold=float(d["threshold"]),
            n_samples=int(d["n_samples"]),
        )


def evaluate_predictions(labels, probs, threshold: float = 0.5) -> EvalReport:
    y, p = _check_pair(labels, probs)
    if len(y) == 0:
        raise EmptySet("no samples to evaluate")
    if not (y == 1).any() or not (y == 0).any():
        raise MissingClass("evaluation needs both positive and negative samples")
    return EvalReport.from_confusion(confusion(y, p, threshold), threshold)


def predict_manifest(clf, manifest, cfg=None, batch_size: int = 64, workers: int = 0):
    """Run the evaluation pipeline and the classifier over a manifest in file order.

    Returns ``(labels, probabilities)``.
    """
    pipe = eval_pipeline(cfg or AugmentConfig())
    labels, probs = [], []
    for x, y in batches(manifest, batch_size, seed=0, pipeline=pipe, shuffle=False, workers=workers):
        probs.append(predict_proba(clf, x))
        labels.append(y)
    if not labels:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.concatenate(labels), np.concatenate(probs)


def evaluate(clf, test, threshold: float = 0.5, cfg=None, batch_size: int = 64, workers: int = 0) -> EvalReport:
    """Score ``clf`` on a held-out manifest."""
    if len(test) == 0:
        raise EmptySet("test manifest is empty")
    counts = test.class_counts()
    if counts[0] == 0 or counts[1] == 0:
        raise MissingClass(f"test manifest needs both classes, got {counts}")
    y, p = predict_manifest(clf, test, cfg, batch_size, workers)
    return evaluate_predictions(y, p, threshold)
