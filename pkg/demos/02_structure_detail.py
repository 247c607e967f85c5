"""
Structure, detail and the Charbonnier loss
==========================================

Every HR target is split into a structure (bicubic down x4 then up x4) and a
detail residue. The network predicts all three images and is penalised with
a Charbonnier term on each.
"""

import math

import torch

from yogo.data import synth_generate
from yogo.loss import decompose, total_loss

seq = synth_generate(seed=0, count=1, height=64, width=64)[0]
target = decompose(seq.frames.double())

print("frame range     ", target.frame.min().item(), target.frame.max().item())
print("structure range ", target.structure.min().item(), target.structure.max().item())
print("detail max |.|  ", target.detail.abs().max().item())
print("structure + detail == frame:",
      torch.allclose(target.structure + target.detail, target.frame, atol=1e-15, rtol=0))

# a periodic pattern at the HR Nyquist frequency is pure detail
y, x = torch.meshgrid(torch.arange(32.0), torch.arange(32.0), indexing="ij")
checker = ((y + x) % 2).double().expand(3, 32, 32)
print("checkerboard detail max:", decompose(checker).detail.abs().max().item())

# perfect prediction leaves only the Charbonnier floor: 3 terms * 7 frames * 1e-3
perfect = total_loss((target.frame, target.structure, target.detail), target)
print("perfect-prediction loss:", perfect.total.item(), "expected", 3 * 7 * 1e-3)

# predicting the structure for every frame costs only the detail terms
blurry = total_loss((target.structure, target.structure, torch.zeros_like(target.detail)), target)
print("blurry prediction:", {k: round(v, 5) for k, v in blurry.as_floats().items()})
print("PSNR of structure vs frame:",
      10 * math.log10(1 / target.detail.pow(2).mean().item()), "dB")
