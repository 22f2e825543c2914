"""Experiment orchestration: data, training modes, evaluation, ablation and saliency."""

from .data import SHAPE_CLASSES, Dataset, make_quadrant_task, make_shapes, subsample
from .evaluation import Perturbation, cross_entropy, evaluate, fgsm, gaussian_perturb, predict
from .gradcam import gradcam
from .metrics import HEADER, MetricsRecord, metrics_to_csv, read_metrics, write_metrics
from .training import MODES, RunConfig, TrainResult, ablate_measure, evaluation_rows, train_classifier

__all__ = [
    "SHAPE_CLASSES",
    "Dataset",
    "make_quadrant_task",
    "make_shapes",
    "subsample",
    "Perturbation",
    "cross_entropy",
    "evaluate",
    "fgsm",
    "gaussian_perturb",
    "predict",
    "gradcam",
    "HEADER",
    "MetricsRecord",
    "metrics_to_csv",
    "read_metrics",
    "write_metrics",
    "MODES",
    "RunConfig",
    "TrainResult",
    "ablate_measure",
    "evaluation_rows",
    "train_classifier",
]
