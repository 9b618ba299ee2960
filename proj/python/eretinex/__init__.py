"""Event-guided retinex low-light enhancement (C++ core)."""

from ._core import (
    Error,
    Model,
    build_dataset,
    count_cost,
    gradcheck,
    gradcheck_ops,
    load_image,
    load_tensor,
    lr_at,
    mae,
    normalize_timestamps,
    psnr,
    read_events,
    save_image,
    save_tensor,
    ssim,
    synth_sample,
    train,
    voxelize,
    write_events,
)

__all__ = [
    "Error",
    "Model",
    "build_dataset",
    "count_cost",
    "gradcheck",
    "gradcheck_ops",
    "load_image",
    "load_tensor",
    "lr_at",
    "mae",
    "normalize_timestamps",
    "psnr",
    "read_events",
    "save_image",
    "save_tensor",
    "ssim",
    "synth_sample",
    "train",
    "voxelize",
    "write_events",
]
