"""COVID-19 chest X-ray classification: data preparation, augmentation,
transfer-learning classifier, evaluation and saliency maps."""

from .dataset import (
    DatasetManifest,
    SampleRecord,
    balance_classes,
    batches,
    load_manifest,
    save_manifest,
    split_train_val,
)
from .evaluation import (
    ConfusionMatrix,
    EvalReport,
    accuracy,
    confusion,
    evaluate,
    evaluate_predictions,
    f1_paper,
    sensitivity,
    specificity,
)
from .model import (
    Classifier,
    ModelSpec,
    bce_loss,
    build_classifier,
    load_checkpoint,
    predict_proba,
    save_checkpoint,
)
from .preprocess import AugmentConfig, ImageBuffer, augment_train, preprocess_eval
from .saliency import SaliencyMap, input_gradient_saliency, overlay
from .train import EpochMetrics, TrainConfig, TrainHistory, epoch_metrics

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "Classifier",
    "ConfusionMatrix",
    "DatasetManifest",
    "EpochMetrics",
    "EvalReport",
    "ImageBuffer",
    "ModelSpec",
    "SaliencyMap",
    "SampleRecord",
    "TrainConfig",
    "TrainHistory",
    "accuracy",
    "augment_train",
    "balance_classes",
    "batches",
    "bce_loss",
    "build_classifier",
    "confusion",
    "epoch_metrics",
    "evaluate",
    "evaluate_predictions",
    "f1_paper",
    "input_gradient_saliency",
    "load_checkpoint",
    "load_manifest",
    "overlay",
    "predict_proba",
    "preprocess_eval",
    "save_checkpoint",
    "save_manifest",
    "sensitivity",
    "specificity",
    "split_train_val",
]
