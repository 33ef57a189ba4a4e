"""Random aligned block masks for H x W images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BlockMask:
    height: int
    width: int
    block_size: int
    n_blocks: int
    grid: np.ndarray  # H x W, 1 inside the selected blocks


def _check_geometry(H, W, b):
    if b < 1 or H % b or W % b:
        raise ValueError(f"block size {b} must divide image size {H}x{W}")
    return (H // b) * (W // b)


def sample_mask(H, W, b, n_range, rng) -> BlockMask:
    """Pick ``n ~ U{n_range}`` distinct b x b blocks without replacement."""
    total = _check_geometry(H, W, b)
    lo, hi = int(n_range[0]), int(n_range[1])
    if not 0 <= lo <= hi <= total:
        raise ValueError(f"n_range {n_range} must lie within [0, {total}]")
    n = int(rng.integers(lo, hi + 1))
    chosen = rng.choice(total, size=n, replace=False)
    cells = np.zeros(total, dtype=np.uint8)
    cells[chosen] = 1
    gw = W // b
    grid = np.kron(cells.reshape(H // b, gw), np.ones((b, b), dtype=np.uint8))
    return BlockMask(H, W, b, n, grid)


def apply_mask(image, mask: BlockMask, keep_selected=False):
    """Zero the selected blocks of ``image``.

    ``keep_selected=True`` gives the literal ``M * x`` product instead, which
    keeps only the selected blocks.
    """
    image = np.asarray(image)
    if image.shape != mask.grid.shape:
        raise ValueError(f"image shape {image.shape} does not match mask {mask.grid.shape}")
    sel = mask.grid.astype(bool)
    if keep_selected:
        return np.where(sel, image, 0.0)
    return np.where(sel, 0.0, image)


def mask_batch(batch, H, W, b, n_range, rng, keep_selected=False):
    """Mask every flattened image of an N x (H*W) batch with its own mask."""
    batch = np.asarray(batch, dtype=np.float64)
    out = np.empty_like(batch)
    for i, row in enumerate(batch):
        m = sample_mask(H, W, b, n_range, rng)
        out[i] = apply_mask(row.reshape(H, W), m, keep_selected).reshape(-1)
    return out
