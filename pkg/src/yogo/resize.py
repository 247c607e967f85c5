"""Separable bicubic resampling (cubic convolution, a = -0.5).

Each axis is resampled by a dense weight matrix built once per
``(in_size, out_size, antialias)``. Taps that fall outside the image are
dropped and the remaining weights renormalised, which keeps DC gain at
exactly one near the borders.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import torch

from .ops import ConfigError

CUBIC_A = -0.5


def cubic_kernel(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


@lru_cache(maxsize=64)
def _axis_weights(in_size: int, out_size: int, scale: float, antialias: bool) -> np.ndarray:
    """``(out_size, in_size)`` float64 resampling matrix for one axis."""
    stretch = scale if (antialias and scale < 1) else 1.0
    support = 2.0 / stretch
    centers = (np.arange(out_size) + 0.5) / scale - 0.5
    taps = np.arange(in_size)
    dist = taps[None, :] - centers[:, None]
    w = cubic_kernel(dist * stretch)
    w[np.abs(dist) >= support] = 0.0
    total = w.sum(axis=1, keepdims=True)
    if np.any(total == 0):
        raise ConfigError("resampling produced an output pixel with no support")
    return w / total


def _resize_axis(img: torch.Tensor, axis: int, scale: float, antialias: bool) -> torch.Tensor:
    in_size = img.shape[axis]
    out_size = int(round(in_size * scale))
    if out_size <= 0:
        raise ConfigError(f"target size along axis {axis} must be positive, got {out_size}")
    w = torch.from_numpy(_axis_weights(in_size, out_size, float(scale), antialias))
    moved = img.movedim(axis, -1)
    return torch.matmul(moved, w.T).movedim(-1, axis)


def bicubic_resize(img: torch.Tensor, scale: float, antialias: bool = True,
                   order: str = "rows") -> torch.Tensor:
    """Resize the last two axes of ``img`` by ``scale``.

    ``order="rows"`` resamples along each row (width) first, ``"cols"`` along
    height first; the two agree to rounding. The result is clamped to [0, 1]
    and returned in the input dtype.
    """
    if scale <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    x = img.to(torch.float64)
    axes = (-1, -2) if order == "rows" else (-2, -1)
    for ax in axes:
        x = _resize_axis(x, ax, scale, antialias)
    return x.clamp_(0.0, 1.0).to(img.dtype)
