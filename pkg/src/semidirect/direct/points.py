"""Candidate point selection: grid-distributed high-gradient pixels."""

from __future__ import annotations

import numpy as np

from ..image import ImagePyramid

SELECTION_MARGIN = 3  # pattern radius 2 + 1 border pixel


def select_candidate_points(pyramid: ImagePyramid, target: int,
                            min_grad: float = 7.0, block_size: int = 8) -> np.ndarray:
    """Pixel positions (u, v) of up to `target` high-gradient candidates.

    Each grid block contributes at most its two strongest pixels above a
    region-adaptive threshold (1.5x the block's median gradient magnitude,
    floored at `min_grad`); the strongest survivors are kept up to `target`.
    Textureless regions yield nothing, so the result may be short.
    """
    gx = pyramid.grad_x[0]
    gy = pyramid.grad_y[0]
    g2 = gx * gx + gy * gy
    h, w = g2.shape
    m = SELECTION_MARGIN
    picks = []
    for y0 in range(m, h - m, block_size):
        for x0 in range(m, w - m, block_size):
            block = g2[y0:min(y0 + block_size, h - m),
                       x0:min(x0 + block_size, w - m)]
            if block.size == 0:
                continue
            thr = max(min_grad * min_grad, 2.25 * float(np.median(block)))
            flat = block.ravel()
            order = np.argsort(flat)
            for idx in order[-2:][::-1]:
                if flat[idx] <= thr:
                    continue
                by, bx = np.unravel_index(idx, block.shape)
                picks.append((float(flat[idx]), x0 + bx, y0 + by))
    picks.sort(key=lambda s: (-s[0], s[2], s[1]))
    picks = picks[:target]
    if not picks:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array([[u, v] for _, u, v in picks], dtype=np.int64)
