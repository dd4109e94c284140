"""Fair multimodal pretraining sandbox: soft-codebook visual dictionary,
mutual-information regularization, adversarial debiasing, contrastive
alignment, and a group-fairness evaluation suite."""

from .datamodel import (AttributeSchema, Batch, Sample, SyntheticSpec,
                        default_schema, generate_synthetic, load_dataset,
                        make_batches, make_schema, save_dataset)
from .metrics import FairnessReport, PredictionSet, auc, build_report
from .runner import (FairModel, RunConfig, evaluate_zero_shot, linear_probe,
                     train, zero_shot_predict)

__all__ = [
    "AttributeSchema", "Batch", "Sample", "SyntheticSpec", "default_schema",
    "generate_synthetic", "load_dataset", "make_batches", "make_schema",
    "save_dataset", "FairnessReport", "PredictionSet", "auc", "build_report",
    "FairModel", "RunConfig", "evaluate_zero_shot", "linear_probe", "train",
    "zero_shot_predict",
]

__version__ = "0.1.0"
