"""Overlay images comparing a reference mask with a rendered mask."""

from __future__ import annotations

import numpy as np

from ..raster import BinaryMask, hard_iou

GREEN = (0, 255, 0)
RED = (255, 0, 0)
YELLOW = (255, 255, 0)


def union_mask(masks, width: int, height: int) -> BinaryMask:
    bits = np.zeros((height, width), dtype=bool)
    for m in masks:
        bits |= m.bits
    return BinaryMask(bits)


def overlay(reference: BinaryMask, rendered: BinaryMask) -> np.ndarray:
    """RGB image: reference in the green channel, render in red, overlap yellow."""
    if reference.shape != rendered.shape:
        raise ValueError(f"mask shapes differ: {reference.shape} vs {rendered.shape}")
    rgb = np.zeros(reference.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = np.where(rendered.bits, 255, 0)
    rgb[..., 1] = np.where(reference.bits, 255, 0)
    return rgb


def region_counts(rgb: np.ndarray) -> dict:
    """Pixel counts of pure red, pure green and yellow pixels."""
    r, g = rgb[..., 0] == 255, rgb[..., 1] == 255
    return {"red": int(np.sum(r & ~g)), "green": int(np.sum(g & ~r)), "yellow": int(np.sum(r & g))}


def overlay_name(image_id: str, reference: BinaryMask, rendered: BinaryMask) -> str:
    return f"{image_id}_smm{hard_iou(rendered, reference):.4f}.ppm"
