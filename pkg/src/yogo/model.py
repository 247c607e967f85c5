"""The YOGO network: feature extraction, bidirectional interactive
propagation, hybrid fusion and reconstruction.

Inputs are ``(N, n+1, 3, h, w)`` LR frames; outputs are three
``(N, 2n+1, 3, 4h, 4w)`` stacks (frames, structures, details).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import torch
from torch import nn
from torch.nn import functional as F

from .ops import (
    LRELU_SLOPE,
    ConfigError,
    DeformConv,
    Fuse1x1,
    OffsetEstimator,
    ResidualBlock,
    SEGate,
    _check_same_shape,
    pixel_shuffle,
)

VARIANTS = ("a", "b", "c", "d", "e")
CELL_ORDERS = ("dfu_then_fru", "fru_then_dfu")

# variant -> (forward sweep, interaction, hybrid fusion)
_VARIANT_FLAGS = {
    "a": (False, False, False),
    "b": (True, False, False),
    "c": (True, False, True),
    "d": (True, True, False),
    "e": (True, True, True),
}


@dataclass
class ModelConfig:
    channels: int = 56
    frb_backward: int = 4
    frb_forward: int = 6
    hfb_count: int = 9
    fe_resblocks: int = 5
    scale_spatial: int = 4
    scale_temporal: int = 2
    variant: str = "e"
    cell_order: str = "dfu_then_fru"
    kernel_k: int = 3

    def validate(self) -> "ModelConfig":
        if self.channels < 1:
            raise ConfigError("channels must be positive")
        if self.scale_spatial != 4 or self.scale_temporal != 2:
            raise ConfigError("only x4 spatial / x2 temporal scaling is supported")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.cell_order not in CELL_ORDERS:
            raise ConfigError(f"unknown cell_order {self.cell_order!r}")
        if min(self.frb_backward, self.frb_forward, self.fe_resblocks) < 0:
            raise ConfigError("block counts must be >= 0")
        if self.uses_hfm and self.hfb_count < 1:
            raise ConfigError(f"variant {self.variant} needs hfb_count >= 1")
        if self.kernel_k < 1 or self.kernel_k % 2 == 0:
            raise ConfigError("kernel_k must be a positive odd integer")
        return self

    @property
    def forward_sweep(self) -> bool:
        return _VARIANT_FLAGS[self.variant][0]

    @property
    def interactive(self) -> bool:
        return _VARIANT_FLAGS[self.variant][1]

    @property
    def uses_hfm(self) -> bool:
        return _VARIANT_FLAGS[self.variant][2]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SequenceState:
    """Per-time-index LR-resolution tensors, each ``(N, C, h, w)``; index 0 is t=1."""

    features: list[torch.Tensor]
    backward_hidden: list[torch.Tensor] = field(default_factory=list)
    forward_hidden: list[torch.Tensor] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.features)


class YOGOOutput(NamedTuple):
    frames: torch.Tensor
    structures: torch.Tensor
    details: torch.Tensor


class RecurrentCell(nn.Module):
    """One recurrent cell: DFU alignment of ``num_hidden`` hidden states
    against the current feature, then FRU fusion (or the reverse order).

    With ``order="fru_then_dfu"`` the hidden states are fused with the
    current feature first and the fused map is aligned by a single DFU
    branch.
    """

    def __init__(self, channels: int, num_hidden: int, num_frb: int, kernel_k: int = 3,
                 order: str = "dfu_then_fru"):
        super().__init__()
        self.order = order
        self.num_hidden = num_hidden
        branches = num_hidden if order == "dfu_then_fru" else 1
        self.estimators = nn.ModuleList(OffsetEstimator(channels, kernel_k) for _ in range(branches))
        self.dconvs = nn.ModuleList(DeformConv(channels, channels, kernel_k) for _ in range(branches))
        self.fusion = Fuse1x1((num_hidden + 1) * channels, channels)
        self.frbs = nn.ModuleList(ResidualBlock(channels) for _ in range(num_frb))

    def dfu(self, hiddens: list[torch.Tensor], f_cur: torch.Tensor) -> list[torch.Tensor]:
        """Align each hidden state to ``f_cur`` with its own offset estimator."""
        if len(hiddens) != len(self.estimators):
            raise ConfigError(f"DFU has {len(self.estimators)} branches, got {len(hiddens)} hiddens")
        _check_same_shape(f_cur, *hiddens, what="DFU inputs")
        aligned = []
        for h, est, dconv in zip(hiddens, self.estimators, self.dconvs):
            aligned.append(dconv(h, est(h, f_cur)))
        return aligned

    def fru(self, aligned: list[torch.Tensor], f_cur: torch.Tensor) -> torch.Tensor:
        _check_same_shape(f_cur, *aligned, what="FRU inputs")
        x = self.fusion(list(aligned) + [f_cur])
        for block in self.frbs:
            x = block(x)
        return x

    def forward(self, hiddens: list[torch.Tensor], f_cur: torch.Tensor) -> torch.Tensor:
        if self.order == "dfu_then_fru":
            return self.fru(self.dfu(hiddens, f_cur), f_cur)
        fused = self.fru(hiddens, f_cur)
        return self.dfu([fused], f_cur)[0]


class HybridFusionBlock(nn.Module):
    """Three-stream block: residual refinement of the backward/forward
    streams and SE cross-gated injection of both into the feature stream.

    ``R1``/``R2`` are the residual branches (conv-lrelu-conv); the skip is
    added explicitly so ``h' = h + R(h)``.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.res_b = ResidualBlock(channels)
        self.res_f = ResidualBlock(channels)
        self.se_b = SEGate(channels)
        self.se_f = SEGate(channels)

    def forward(self, h_b, h_f, f):
        _check_same_shape(h_b, h_f, f, what="HFB inputs")
        r1 = self.res_b.body(h_b)
        r2 = self.res_f.body(h_f)
        g1 = self.se_b(r1)[:, :, None, None]
        g2 = self.se_f(r2)[:, :, None, None]
        return h_b + r1, h_f + r2, f + g1 * r2 + g2 * r1


class DirectFusion(nn.Module):
    """Ablation baseline: 1x1 fusion of the three streams plus two residual blocks."""

    def __init__(self, channels: int):
        super().__init__()
        self.fusion = Fuse1x1(3 * channels, channels)
        self.blocks = nn.Sequential(ResidualBlock(channels), ResidualBlock(channels))

    def forward(self, h_b, h_f, f):
        return h_b, h_f, self.blocks(self.fusion([h_b, h_f, f]))


class HybridFusionModule(nn.Module):
    def __init__(self, channels: int, num_blocks: int):
        super().__init__()
        self.blocks = nn.ModuleList(HybridFusionBlock(channels) for _ in range(num_blocks))

    def forward(self, h_b, h_f, f):
        for block in self.blocks:
            h_b, h_f, f = block(h_b, h_f, f)
        return h_b, h_f, f


class ReconstructionHead(nn.Module):
    """x4 upsampler: two conv + pixel-shuffle stages, then conv-lrelu-conv to RGB."""

    def __init__(self, channels: int):
        super().__init__()
        self.up1 = nn.Conv2d(channels, 4 * channels, 3, padding=1)
        self.up2 = nn.Conv2d(channels, 4 * channels, 3, padding=1)
        self.conv_hr = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv_last = nn.Conv2d(channels, 3, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = pixel_shuffle(self.up1(x), 2)
        x = pixel_shuffle(self.up2(x), 2)
        return self.conv_last(F.leaky_relu(self.conv_hr(x), LRELU_SLOPE))


def init_weights(model: nn.Module) -> None:
    """Variance-preserving (LeCun normal) init for the plain convolutions.

    PyTorch's default conv init shrinks activation variance about 3x per layer,
    and the path from an LR pixel to the output crosses roughly seven such
    layers. Residual blocks, offset estimators and SE gates keep their own init.
    """
    own = set()
    for m in model.modules():
        if isinstance(m, (ResidualBlock, OffsetEstimator, SEGate)):
            own.update(id(p) for p in m.parameters())
    for m in model.modules():
        if isinstance(m, nn.Conv2d) and id(m.weight) not in own:
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="linear")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class YOGO(nn.Module):
    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg = (cfg or ModelConfig()).validate()
        c = cfg.channels
        self.fe_conv = nn.Conv2d(3, c, 3, padding=1)
        self.fe_blocks = nn.Sequential(*(ResidualBlock(c) for _ in range(cfg.fe_resblocks)))
        self.synth_fusion = Fuse1x1(2 * c, c)
        self.synth_block = ResidualBlock(c)
        self.backward_cell = RecurrentCell(c, 1, cfg.frb_backward, cfg.kernel_k, cfg.cell_order)
        if cfg.forward_sweep:
            n_hidden = 2 if cfg.interactive else 1
            self.forward_cell = RecurrentCell(c, n_hidden, cfg.frb_forward, cfg.kernel_k,
                                              cfg.cell_order)
        else:
            self.forward_cell = None
        if cfg.uses_hfm:
            self.fusion = HybridFusionModule(c, cfg.hfb_count)
        else:
            self.fusion = DirectFusion(c)
        self.recon_frame = ReconstructionHead(c)
        self.recon_structure = ReconstructionHead(c)
        self.recon_detail = ReconstructionHead(c)
        init_weights(self)

    # -- stages -----------------------------------------------------------
    def extract_features(self, lr: torch.Tensor) -> list[torch.Tensor]:
        """Shared-weight per-frame features for the ``n+1`` input frames."""
        if lr.dim() != 5 or lr.shape[2] != 3:
            raise ConfigError(f"expected (N, T, 3, h, w) frames, got {tuple(lr.shape)}")
        n, t, _, h, w = lr.shape
        feats = self.fe_blocks(self.fe_conv(lr.reshape(n * t, 3, h, w)))
        return list(feats.view(n, t, -1, h, w).unbind(1))

    def synthesize_intermediate(self, f_prev: torch.Tensor, f_next: torch.Tensor) -> torch.Tensor:
        _check_same_shape(f_prev, f_next, what="neighbour features")
        return self.synth_block(self.synth_fusion([f_prev, f_next]))

    def build_state(self, lr: torch.Tensor) -> SequenceState:
        odd = self.extract_features(lr)
        feats = [odd[0]]
        for prev, nxt in zip(odd[:-1], odd[1:]):
            feats.append(self.synthesize_intermediate(prev, nxt))
            feats.append(nxt)
        return SequenceState(features=feats)

    def propagate(self, state: SequenceState) -> SequenceState:
        feats = state.features
        length = len(feats)
        zero = torch.zeros_like(feats[0])

        backward = [None] * length
        h = zero
        for t in range(length - 1, -1, -1):
            h = self.backward_cell([h], feats[t])
            backward[t] = h

        if self.forward_cell is None:
            forward = list(backward)
        else:
            forward = [None] * length
            h = zero
            for t in range(length):
                if self.cfg.interactive:
                    h_next_b = backward[t + 1] if t + 1 < length else zero
                    h = self.forward_cell([h, h_next_b], feats[t])
                else:
                    h = self.forward_cell([h], feats[t])
                forward[t] = h
        return SequenceState(features=list(feats), backward_hidden=backward, forward_hidden=forward)

    def fuse(self, state: SequenceState):
        """Run the fusion module per time index; returns a list of (h_b, h_f, f)."""
        return [self.fusion(hb, hf, f) for hb, hf, f in
                zip(state.backward_hidden, state.forward_hidden, state.features)]

    def reconstruct(self, f_final, h_b_final, h_f_final):
        return (self.recon_frame(f_final), self.recon_structure(h_b_final),
                self.recon_detail(h_f_final))

    def forward(self, lr: torch.Tensor) -> YOGOOutput:
        if lr.dim() != 5 or lr.shape[1] < 2:
            raise ConfigError("need at least 2 input frames shaped (N, T, 3, h, w)")
        state = self.propagate(self.build_state(lr))
        fused = self.fuse(state)
        n = lr.shape[0]
        # batch all time indices through the heads at once
        hb = torch.cat([x[0] for x in fused])
        hf = torch.cat([x[1] for x in fused])
        f = torch.cat([x[2] for x in fused])
        frames, structures, details = self.reconstruct(f, hb, hf)
        steps = len(fused)

        def restack(x):
            return x.view(steps, n, *x.shape[1:]).transpose(0, 1)

        return YOGOOutput(restack(frames), restack(structures), restack(details))


def param_breakdown(model: nn.Module) -> dict[str, int]:
    """Trainable scalar count per top-level submodule."""
    counts: dict[str, int] = {}
    for name, p in model.named_parameters():
        if p.requires_grad:
            top = name.split(".", 1)[0]
            counts[top] = counts.get(top, 0) + p.numel()
    return counts
