"""
Deformable alignment in a few lines
===================================

A deformable convolution samples its 3x3 taps at learned fractional
offsets. With zero offsets it is an ordinary convolution; with a constant
offset it can undo a global shift between two feature maps.
"""

import torch
from torch.nn import functional as F

from yogo.ops import deform_conv

torch.manual_seed(0)
feature = torch.rand(1, 2, 8, 10, dtype=torch.float64)
weight = torch.randn(3, 2, 3, 3, dtype=torch.float64)

# zero offsets: 2 * 3 * 3 = 18 offset channels, (dy, dx) per tap
zero = torch.zeros(1, 18, 8, 10, dtype=torch.float64)
plain = F.conv2d(feature, weight, padding=1)
print("zero offsets vs conv2d, max diff:",
      (deform_conv(feature, zero, weight) - plain).abs().max().item())

# shift the map one pixel to the right, then read every tap one pixel
# further right to compensate
shifted = torch.zeros_like(feature)
shifted[..., 1:] = feature[..., :-1]
offsets = torch.zeros_like(zero)
offsets[:, 1::2] = 1.0  # dx channels
aligned = deform_conv(shifted, offsets, weight)
print("shift undone (interior), max diff:",
      (aligned - plain)[..., :-2].abs().max().item())

# half-pixel offsets interpolate bilinearly between neighbours
offsets[:, 1::2] = 0.5
halfway = deform_conv(shifted, offsets, weight)
print("half-pixel result lies between the two:",
      bool(((halfway - plain).abs() <= (plain - F.conv2d(shifted, weight, padding=1)).abs() + 1e-9)
           [..., 1:-2].all()))
