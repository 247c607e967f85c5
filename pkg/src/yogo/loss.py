"""Structure/detail decomposition of targets and the Charbonnier training loss."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .ops import ConfigError
from .resize import bicubic_resize

CHARBONNIER_EPS = 1e-3


@dataclass
class DecomposedTarget:
    """HR frame(s) split into a low-frequency structure and a signed detail residue.

    Tensors share a shape ending in ``(3, H, W)``; leading axes (time, batch)
    are allowed.
    """

    frame: torch.Tensor
    structure: torch.Tensor
    detail: torch.Tensor

    def to(self, *args, **kwargs) -> "DecomposedTarget":
        return DecomposedTarget(self.frame.to(*args, **kwargs),
                                self.structure.to(*args, **kwargs),
                                self.detail.to(*args, **kwargs))


def decompose(frame: torch.Tensor, scale: int = 4) -> DecomposedTarget:
    h, w = frame.shape[-2:]
    if h % scale or w % scale:
        raise ConfigError(f"frame size {h}x{w} not divisible by {scale}")
    low = bicubic_resize(frame, 1.0 / scale, antialias=True)
    structure = bicubic_resize(low, float(scale), antialias=True)
    return DecomposedTarget(frame=frame, structure=structure, detail=frame - structure)


def charbonnier(x: torch.Tensor, eps: float = CHARBONNIER_EPS) -> torch.Tensor:
    return torch.sqrt(x * x + eps * eps)


@dataclass
class LossBreakdown:
    total: torch.Tensor
    frame: torch.Tensor
    structure: torch.Tensor
    detail: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: getattr(self, k).item() for k in ("total", "frame", "structure", "detail")}


def _term(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    # mean over (C, H, W) per frame, summed over time, averaged over batch
    per_frame = charbonnier(pred - target).mean(dim=(-3, -2, -1))
    return per_frame.sum(dim=-1).mean() if per_frame.dim() > 1 else per_frame.sum()


def total_loss(pred, target: DecomposedTarget) -> LossBreakdown:
    """Sum over frames of the three Charbonnier terms.

    Args:
        pred: ``(frames, structures, details)`` each ``(N, T, 3, H, W)`` or
            ``(T, 3, H, W)``.
        target: matching ``DecomposedTarget``.
    """
    frames, structures, details = pred
    for p, t, name in ((frames, target.frame, "frame"),
                       (structures, target.structure, "structure"),
                       (details, target.detail, "detail")):
        if p.shape != t.shape:
            raise ConfigError(f"{name} prediction {tuple(p.shape)} != target {tuple(t.shape)}")
    lf = _term(frames, target.frame)
    ls = _term(structures, target.structure)
    ld = _term(details, target.detail)
    return LossBreakdown(total=lf + ls + ld, frame=lf, structure=ls, detail=ld)
