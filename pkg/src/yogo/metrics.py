"""PSNR / SSIM evaluation and parameter accounting."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import torch
from torch.nn import functional as F

from .model import ModelConfig, YOGO, param_breakdown
from .ops import ConfigError

INFINITE_PSNR = math.inf
LUMA601 = (0.299, 0.587, 0.114)
CHANNEL_MODES = ("rgb", "luma601")


def _prepare(img: torch.Tensor, channel_mode: str) -> torch.Tensor:
    x = img.to(torch.float64)
    if channel_mode == "rgb":
        return x
    if channel_mode == "luma601":
        w = torch.tensor(LUMA601, dtype=torch.float64).view(3, 1, 1)
        return (x * w).sum(dim=-3, keepdim=True)
    raise ConfigError(f"unknown channel_mode {channel_mode!r}")


def psnr(a: torch.Tensor, b: torch.Tensor, peak: float = 1.0, channel_mode: str = "rgb") -> float:
    """PSNR in dB over every channel and pixel; ``INFINITE_PSNR`` when a == b."""
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    mse = float(((_prepare(a, channel_mode) - _prepare(b, channel_mode)) ** 2).mean())
    if mse == 0.0:
        return INFINITE_PSNR
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> torch.Tensor:
    x = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def ssim(a: torch.Tensor, b: torch.Tensor, peak: float = 1.0, channel_mode: str = "rgb",
         window: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM over valid (unpadded) window positions, averaged over channels.

    Images are ``(C, H, W)``.
    """
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    if min(a.shape[-2:]) < window:
        raise ConfigError(f"image {tuple(a.shape[-2:])} smaller than the {window}x{window} window")
    x = _prepare(a, channel_mode)[None]
    y = _prepare(b, channel_mode)[None]
    c = x.shape[1]
    g = gaussian_window(window, sigma)
    kernel = (g[:, None] * g[None, :]).expand(c, 1, window, window)

    def blur(t):
        return F.conv2d(t, kernel, groups=c)

    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_x, mu_y = blur(x), blur(y)
    sxx = blur(x * x) - mu_x ** 2
    syy = blur(y * y) - mu_y ** 2
    sxy = blur(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return float((num / den).mean())


def _finite_mean(values: list[float], what: str) -> float:
    finite = [v for v in values if math.isfinite(v)]
    if len(finite) < len(values):
        warnings.warn(f"{len(values) - len(finite)} infinite {what} value(s) excluded from mean",
                      RuntimeWarning, stacklevel=3)
    return sum(finite) / len(finite) if finite else INFINITE_PSNR


@dataclass
class MetricReport:
    per_frame: list[tuple[int, float, float]] = field(default_factory=list)
    channel_mode: str = "rgb"

    @property
    def mean_psnr_db(self) -> float:
        return _finite_mean([p for _, p, _ in self.per_frame], "PSNR")

    @property
    def mean_ssim(self) -> float:
        vals = [s for _, _, s in self.per_frame]
        return sum(vals) / len(vals) if vals else float("nan")

    def subset(self, indices) -> "MetricReport":
        keep = set(indices)
        return MetricReport([r for r in self.per_frame if r[0] in keep], self.channel_mode)

    def to_dict(self) -> dict:
        return {
            "channel_mode": self.channel_mode,
            "per_frame": [{"index": i, "psnr_db": _json_float(p), "ssim": s}
                          for i, p, s in self.per_frame],
            "mean_psnr_db": _json_float(self.mean_psnr_db),
            "mean_ssim": self.mean_ssim,
        }


def _json_float(v: float):
    return v if math.isfinite(v) else "inf"


def evaluate_frames(pred: torch.Tensor, target: torch.Tensor, channel_mode: str = "rgb",
                    indices=None) -> MetricReport:
    """Per-frame metrics for ``(T, 3, H, W)`` stacks; indices default to 1..T."""
    if pred.shape != target.shape:
        raise ConfigError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    indices = indices or range(1, pred.shape[0] + 1)
    rows = []
    for i, p, t in zip(indices, pred, target):
        p = p.clamp(0, 1)
        rows.append((i, psnr(p, t, channel_mode=channel_mode), ssim(p, t, channel_mode=channel_mode)))
    return MetricReport(rows, channel_mode)


def param_count(cfg: ModelConfig) -> tuple[int, dict[str, int]]:
    """Total trainable scalars and a per-submodule breakdown."""
    with torch.device("meta"):
        model = YOGO(cfg)
    breakdown = param_breakdown(model)
    return sum(breakdown.values()), breakdown
