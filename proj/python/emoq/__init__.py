"""Context-aware emotion recognition: VLLM descriptions fused with images by a query transformer."""

from ._emoq import (
    ConfigError,
    ManifestError,
    average_precision,
    build_prompt,
    caers_class_names,
    emotic_class_names,
    evaluate,
    frame_indices,
    gradient_suite,
    iou,
    modality_ceiling,
    roc_auc,
    train,
    write_synthetic,
)

__all__ = [
    "ConfigError",
    "ManifestError",
    "average_precision",
    "build_prompt",
    "caers_class_names",
    "emotic_class_names",
    "evaluate",
    "frame_indices",
    "gradient_suite",
    "iou",
    "modality_ceiling",
    "roc_auc",
    "train",
    "write_synthetic",
]
