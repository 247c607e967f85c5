"""Differentiable building blocks shared by every part of the network.

All tensors are batched ``(N, C, H, W)`` unless a function says otherwise.
Offsets for deformable convolution are laid out as ``(N, 2*K*K, H, W)`` with
one ``(dy, dx)`` pair per kernel tap and taps in row-major kernel order.
"""

from __future__ import annotations

from typing import Sequence

import torch
from torch import nn
from torch.nn import functional as F

LRELU_SLOPE = 0.1


class ConfigError(ValueError):
    """Raised when tensor shapes or settings do not fit together."""


def _check_same_shape(*tensors: torch.Tensor, what: str = "inputs") -> None:
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != first:
            raise ConfigError(f"{what} must share a shape, got {tuple(first)} and {tuple(t.shape)}")


def bilinear_sample(feature: torch.Tensor, y, x) -> torch.Tensor:
    """Sample a ``(C, H, W)`` map at one continuous location.

    Pixel centres sit on integer coordinates. Neighbours outside the map read
    as zero. Differentiable in ``feature`` and, when given as tensors, in
    ``y`` and ``x``.
    """
    y = torch.as_tensor(y, dtype=feature.dtype)
    x = torch.as_tensor(x, dtype=feature.dtype)
    out = sample_points(feature[None], y.reshape(1, 1), x.reshape(1, 1))
    return out[0, :, 0]


def sample_points(feature: torch.Tensor, ys: torch.Tensor, xs: torch.Tensor) -> torch.Tensor:
    """Zero-padded bilinear sampling at arbitrary points.

    Args:
        feature: ``(N, C, H, W)`` map.
        ys, xs: ``(N, P)`` sample coordinates (row, column).

    Returns:
        ``(N, C, P)`` sampled values.
    """
    n, c, h, w = feature.shape
    y0 = torch.floor(ys)
    x0 = torch.floor(xs)
    fy = ys - y0
    fx = xs - x0
    y0 = y0.long()
    x0 = x0.long()
    flat = feature.reshape(n, c, h * w)
    out = 0
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yy = y0 + dy
            xx = x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            idx = (yy.clamp(0, h - 1) * w + xx.clamp(0, w - 1))
            vals = torch.gather(flat, 2, idx[:, None, :].expand(n, c, idx.shape[1]))
            weight = (wy * wx * valid.to(feature.dtype))[:, None, :]
            out = out + vals * weight
    return out


def deform_conv(
    input: torch.Tensor,
    offsets: torch.Tensor,
    weight: torch.Tensor,
    bias: torch.Tensor | None = None,
) -> torch.Tensor:
    """Deformable convolution, stride 1, 'same' padding, one offset group.

    ``out[o, p] = bias[o] + sum_{c,k} weight[o, c, k] * sample(input[c], p + p_k + off_k(p))``
    where ``p_k`` is the regular kernel grid tap.

    Args:
        input: ``(N, C_in, H, W)``.
        offsets: ``(N, 2*K*K, H, W)`` as ``(dy, dx)`` pairs, taps row-major.
        weight: ``(C_out, C_in, K, K)`` with odd ``K``.
        bias: optional ``(C_out,)``.
    """
    if input.dim() != 4 or offsets.dim() != 4:
        raise ConfigError("deform_conv expects batched 4-D input and offsets")
    n, c_in, h, w = input.shape
    c_out, wc_in, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise ConfigError(f"kernel must be square with odd size, got {k}x{k2}")
    if wc_in != c_in:
        raise ConfigError(f"weight expects {wc_in} input channels, input has {c_in}")
    if offsets.shape != (n, 2 * k * k, h, w):
        raise ConfigError(
            f"offsets must have shape {(n, 2 * k * k, h, w)}, got {tuple(offsets.shape)}"
        )
    r = (k - 1) // 2
    dtype, device = input.dtype, input.device
    iy = torch.arange(h, dtype=dtype, device=device).view(1, 1, h, 1)
    ix = torch.arange(w, dtype=dtype, device=device).view(1, 1, 1, w)
    ky, kx = torch.meshgrid(
        torch.arange(k, dtype=dtype, device=device) - r,
        torch.arange(k, dtype=dtype, device=device) - r,
        indexing="ij",
    )
    off = offsets.view(n, k * k, 2, h, w)
    ys = iy + ky.reshape(1, k * k, 1, 1) + off[:, :, 0]
    xs = ix + kx.reshape(1, k * k, 1, 1) + off[:, :, 1]
    cols = sample_points(input, ys.reshape(n, -1), xs.reshape(n, -1))
    cols = cols.view(n, c_in * k * k, h * w)
    out = torch.matmul(weight.reshape(c_out, c_in * k * k), cols).view(n, c_out, h, w)
    if bias is not None:
        out = out + bias.view(1, c_out, 1, 1)
    return out


class DeformConv(nn.Module):
    """Learnable deformable convolution layer; offsets are supplied per call."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3):
        super().__init__()
        self.kernel_size = kernel_size
        conv = nn.Conv2d(in_channels, out_channels, kernel_size, padding=kernel_size // 2)
        self.weight = nn.Parameter(conv.weight.detach().clone())
        self.bias = nn.Parameter(conv.bias.detach().clone())

    def forward(self, x: torch.Tensor, offsets: torch.Tensor) -> torch.Tensor:
        return deform_conv(x, offsets, self.weight, self.bias)


class OffsetEstimator(nn.Module):
    """Predicts a deformable offset field from two feature maps.

    ``concat(a, b) -> conv -> lrelu -> conv -> lrelu -> conv(2*K*K)``. The last
    conv starts at zero so a fresh estimator returns zero offsets.
    """

    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        self.kernel_size = kernel_size
        self.conv1 = nn.Conv2d(2 * channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv_offset = nn.Conv2d(channels, 2 * kernel_size * kernel_size, 3, padding=1)
        nn.init.zeros_(self.conv_offset.weight)
        nn.init.zeros_(self.conv_offset.bias)

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        _check_same_shape(a, b, what="offset estimator inputs")
        x = F.leaky_relu(self.conv1(torch.cat([a, b], dim=1)), LRELU_SLOPE)
        x = F.leaky_relu(self.conv2(x), LRELU_SLOPE)
        return self.conv_offset(x)


class ResidualBlock(nn.Module):
    """``x + conv(lrelu(conv(x)))`` without normalization."""

    def __init__(self, channels: int, init_scale: float = 0.1):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        for conv in (self.conv1, self.conv2):
            nn.init.kaiming_normal_(conv.weight, a=LRELU_SLOPE, mode="fan_in",
                                    nonlinearity="leaky_relu")
            conv.weight.data.mul_(init_scale)
            nn.init.zeros_(conv.bias)

    def body(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv2(F.leaky_relu(self.conv1(x), LRELU_SLOPE))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class SEGate(nn.Module):
    """Squeeze-and-excitation gate returning per-channel weights in (0, 1).

    Only the gate is returned, shape ``(N, C)``; callers decide which tensor
    it scales.
    """

    def __init__(self, channels: int, reduction: int = 16, min_hidden: int = 4):
        super().__init__()
        hidden = max(min_hidden, channels // reduction)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pooled = x.mean(dim=(2, 3))
        return torch.sigmoid(self.fc2(F.relu(self.fc1(pooled))))


def pixel_shuffle(x: torch.Tensor, scale: int) -> torch.Tensor:
    """Rearrange ``(N, C*s*s, H, W)`` into ``(N, C, s*H, s*W)``."""
    if x.shape[-3] % (scale * scale):
        raise ConfigError(f"{x.shape[-3]} channels not divisible by scale^2={scale * scale}")
    return F.pixel_shuffle(x, scale)


def pixel_unshuffle(x: torch.Tensor, scale: int) -> torch.Tensor:
    if x.shape[-1] % scale or x.shape[-2] % scale:
        raise ConfigError(f"spatial size {tuple(x.shape[-2:])} not divisible by {scale}")
    return F.pixel_unshuffle(x, scale)


class Fuse1x1(nn.Module):
    """Channel-concatenate a list of maps and mix them with a 1x1 conv."""

    def __init__(self, in_channels: Sequence[int] | int, out_channels: int):
        super().__init__()
        total = in_channels if isinstance(in_channels, int) else sum(in_channels)
        self.conv = nn.Conv2d(total, out_channels, 1)

    def forward(self, parts: Sequence[torch.Tensor]) -> torch.Tensor:
        size = parts[0].shape[-2:]
        for p in parts[1:]:
            if p.shape[-2:] != size:
                raise ConfigError(
                    f"fusion parts must share H x W, got {tuple(size)} and {tuple(p.shape[-2:])}"
                )
        return self.conv(torch.cat(list(parts), dim=1))
