"""Ellipsoid-bounded neural density primitives."""

from ._core import (
    Camera,
    Dataset,
    Ellipsoid,
    Primitive,
    PrimitiveConfig,
    Ray,
    Scene,
    check,
    gen_toy,
    init_scene,
    intersect,
    load_checkpoint,
    load_dataset,
    look_at,
    psnr,
    render,
    save_checkpoint,
    ssim,
    train,
    write_png,
)

__all__ = [
    "Camera",
    "Dataset",
    "Ellipsoid",
    "Primitive",
    "PrimitiveConfig",
    "Ray",
    "Scene",
    "check",
    "gen_toy",
    "init_scene",
    "intersect",
    "load_checkpoint",
    "load_dataset",
    "look_at",
    "psnr",
    "render",
    "save_checkpoint",
    "ssim",
    "train",
    "write_png",
]
