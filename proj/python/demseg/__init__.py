"""Semi-supervised binary segmentation toolkit (C++ core)."""

import torch as _torch  # the extension links libtorch; load it first


from ._core import (
    __version__,
    apply_plan,
    bland_altman,
    compute_metrics,
    confusion,
    describe,
    evaluate,
    fusion_loss,
    lr_schedule,
    magnitude_cap,
    predict,
    sample_plan,
    sensitivity_loss_hard,
    sensitivity_loss_soft,
    split_dataset,
    synth_generate,
    train,
    unsupervised_loss,
    warmup,
)

__all__ = [
    "__version__",
    "apply_plan",
    "bland_altman",
    "compute_metrics",
    "confusion",
    "describe",
    "evaluate",
    "fusion_loss",
    "lr_schedule",
    "magnitude_cap",
    "predict",
    "sample_plan",
    "sensitivity_loss_hard",
    "sensitivity_loss_soft",
    "split_dataset",
    "synth_generate",
    "train",
    "unsupervised_loss",
    "warmup",
]
