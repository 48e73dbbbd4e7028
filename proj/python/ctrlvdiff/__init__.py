"""Python bindings for the ctrlvdiff C++ core."""

from ._ctrlvdiff import (
    Codec,
    FormatError,
    Model,
    RuntimeFailure,
    ValidationError,
    assign_roles,
    canny,
    depth_metrics,
    generate_clip,
    list_clips,
    modalities,
    normal_metrics,
    palette_color,
    psnr,
    read_clip,
    run_cli,
    seg_iou,
    ssim,
    temporal_consistency,
    to_color_space,
    write_clip,
)

__all__ = [
    "Codec",
    "FormatError",
    "Model",
    "RuntimeFailure",
    "ValidationError",
    "assign_roles",
    "canny",
    "depth_metrics",
    "generate_clip",
    "list_clips",
    "modalities",
    "normal_metrics",
    "palette_color",
    "psnr",
    "read_clip",
    "run_cli",
    "seg_iou",
    "ssim",
    "temporal_consistency",
    "to_color_space",
    "write_clip",
]
