"""
One forward pass
================

Four LR frames at positions 1, 3, 5, 7 go in; seven HR frames come out at
four times the resolution, together with their structure and detail
predictions. The five ablation variants share this interface.
"""

import torch

from yogo import YOGO, ModelConfig, param_count

cfg = ModelConfig(channels=16, frb_backward=2, frb_forward=3, hfb_count=3)
torch.manual_seed(0)
model = YOGO(cfg).eval()

lr = torch.rand(1, 4, 3, 16, 16)
with torch.no_grad():
    out = model(lr)
print("input ", tuple(lr.shape))
print("frames", tuple(out.frames.shape))
print("struct", tuple(out.structures.shape))
print("detail", tuple(out.details.shape))

# the recurrent state is inspectable step by step
with torch.no_grad():
    state = model.propagate(model.build_state(lr))
print("hidden states per direction:", len(state.backward_hidden), len(state.forward_hidden))

for variant in "abcde":
    total, _ = param_count(ModelConfig(channels=16, frb_backward=2, frb_forward=3,
                                       hfb_count=3, variant=variant))
    print(f"variant ({variant}) parameters: {total:,}")

# the full-width configuration
total, parts = param_count(ModelConfig(channels=56))
print(f"channels=56, 4+6 FRBs, 9 HFBs: {total / 1e6:.2f} M parameters")
for name, n in parts.items():
    print(f"  {name:<16} {n:>9,}")
