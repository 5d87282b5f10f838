"""Desk-scale image classification data: colored, oriented bars with noise."""

import logging
from typing import Optional

from matplotlib.colors import hsv_to_rgb
import numpy as np
import torch
from typeguard import check_argument_types

from uadat.data.indexed_dataset import IndexedDataset


def check_feature_geometry(image_size: int, stem_stride: int, feature_dim: int):
    """Reject sizes whose stem output has fewer positions than channels."""
    side = -(-image_size // stem_stride)
    if side * side < feature_dim:
        raise ValueError(
            f"image_size={image_size} gives a {side}x{side} feature map after a "
            f"stem stride of {stem_stride}, but H*W >= D={feature_dim} is required; "
            f"use image_size >= {stem_stride * int(np.ceil(np.sqrt(feature_dim)))}"
        )


def make_synthetic(
    n_per_class: int,
    classes: int,
    image_size: int = 16,
    seed: int = 0,
    in_channels: int = 3,
    noise: float = 0.08,
    feature_dim: Optional[int] = None,
    stem_stride: int = 1,
    split: str = "train",
) -> IndexedDataset:
    """Render a balanced set of class-conditional images.

    Class c is a bar at angle pi * c / classes drawn in hue c / classes over a
    gray background, with per-image jitter of angle, offset and width plus
    Gaussian pixel noise. The result is a deterministic function of the
    arguments.

    Args:
        n_per_class: Samples per class.
        classes: Number of classes (>= 2).
        image_size: Side of the square images.
        seed: Seed of the numpy generator.
        in_channels: 3 (color) or 1 (luminance).
        noise: Std of the pixel noise.
        feature_dim: D at the cut point of the model that will consume it;
            None skips the geometry check.
        stem_stride: Total stride up to the cut point.
        split: Split tag of the returned set.
    """
    assert check_argument_types()
    if classes < 2:
        raise ValueError(f"classes must be >= 2: {classes}")
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1: {n_per_class}")
    if in_channels not in (1, 3):
        raise ValueError(f"in_channels must be 1 or 3: {in_channels}")
    if feature_dim is not None:
        check_feature_geometry(image_size, stem_stride, feature_dim)

    rs = np.random.RandomState(seed)
    N = n_per_class * classes
    labels = rs.permutation(np.repeat(np.arange(classes), n_per_class))

    hues = np.arange(classes) / classes
    colors = hsv_to_rgb(np.stack([hues, np.full(classes, 0.8), np.ones(classes)], 1))

    coords = np.linspace(-1.0, 1.0, image_size)
    v, u = np.meshgrid(coords, coords, indexing="ij")
    angle = np.pi * labels / classes + rs.uniform(-0.15, 0.15, N)
    offset = rs.uniform(-0.3, 0.3, N)
    width = rs.uniform(0.12, 0.22, N)
    # distance of every pixel to each image's bar, (N, H, W)
    dist = (
        -np.sin(angle)[:, None, None] * u[None]
        + np.cos(angle)[:, None, None] * v[None]
        - offset[:, None, None]
    )
    intensity = np.exp(-0.5 * (dist / width[:, None, None]) ** 2)

    images = 0.25 + 0.65 * intensity[:, None] * colors[labels][:, :, None, None]
    if in_channels == 1:
        images = images.mean(axis=1, keepdims=True)
    images = images + noise * rs.standard_normal(images.shape)
    images = np.clip(images, 0.0, 1.0).astype(np.float32)

    logging.info(
        f"make_synthetic: {N} images of {in_channels}x{image_size}x{image_size}, "
        f"{classes} classes, seed={seed}"
    )
    return IndexedDataset(
        torch.from_numpy(images),
        torch.from_numpy(labels.astype(np.int64)),
        num_classes=classes,
        split=split,
        name="synthetic",
    )
