"""Patch cropping and flip augmentation."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Patch, Tray
from .errors import OutOfBoundsError


def _window(tray: Tray, x: int, y: int, p: int) -> tuple[slice, slice]:
    half = p // 2
    rows, cols = tray.shape
    if not (half <= y <= rows - half and half <= x <= cols - half):
        raise OutOfBoundsError(f"patch window at ({x}, {y}) leaves the {cols}x{rows} tray")
    return slice(y - half, y - half + p), slice(x - half, x - half + p)


def crop_patch(tray: Tray, x: int, y: int, patch_cells: int = 30) -> Patch:
    """P x P window centred on (x, y): heights relative to the centre, raw intensity.

    The centre sits at index (P // 2, P // 2) and its relative height is
    exactly zero.
    """
    rs, cs = _window(tray, x, y, patch_cells)
    out = np.empty((2, patch_cells, patch_cells))
    out[0] = tray.heights[rs, cs] - tray.heights[y, x]
    out[1] = tray.intensity[rs, cs]
    return Patch(out, (int(x), int(y)))


def crop_many(tray: Tray, points, patch_cells: int = 30) -> np.ndarray:
    """Batched crop_patch; returns (N, 2, P, P) float64 with identical values."""
    points = list(points)
    out = np.empty((len(points), 2, patch_cells, patch_cells))
    if not points:
        return out
    for x, y in points:
        _window(tray, x, y, patch_cells)
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    half = patch_cells // 2
    hw = sliding_window_view(tray.heights, (patch_cells, patch_cells))
    iw = sliding_window_view(tray.intensity, (patch_cells, patch_cells))
    np.subtract(hw[ys - half, xs - half], tray.heights[ys, xs][:, None, None], out=out[:, 0])
    out[:, 1] = iw[ys - half, xs - half]
    return out


def flip_augment(patch: Patch, rng) -> Patch:
    """Independently flip rows and columns with probability 0.5 each."""
    ch = patch.channels
    if rng.random() < 0.5:
        ch = ch[:, ::-1, :]
    if rng.random() < 0.5:
        ch = ch[:, :, ::-1]
    return Patch(np.ascontiguousarray(ch), patch.center_xy)


def flip_batch(batch: np.ndarray, rng) -> np.ndarray:
    """Per-sample flip_augment over an (N, C, P, P) array."""
    flip_v = rng.random(len(batch)) < 0.5
    flip_h = rng.random(len(batch)) < 0.5
    out = batch.copy()
    out[flip_v] = out[flip_v][:, :, ::-1, :]
    out[flip_h] = out[flip_h][:, :, :, ::-1]
    return out
