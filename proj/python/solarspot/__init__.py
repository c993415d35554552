"""Thermal PV hotspot detection toolkit."""

from ._core import (
    Error,
    Model,
    baseline_detect,
    class_name,
    contrast_stretch,
    encode_pnm,
    evaluate,
    iou,
    kmeans_anchors,
    letterbox,
    load_tiff,
    nms,
    render_overlay,
    split_dataset,
    synth_scene,
    write_tiff,
)

__all__ = [
    "Error",
    "Model",
    "baseline_detect",
    "class_name",
    "contrast_stretch",
    "encode_pnm",
    "evaluate",
    "iou",
    "kmeans_anchors",
    "letterbox",
    "load_tiff",
    "nms",
    "render_overlay",
    "split_dataset",
    "synth_scene",
    "write_tiff",
]
