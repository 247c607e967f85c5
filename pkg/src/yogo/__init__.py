"""Spatial-temporal video super-resolution with bidirectional interactive
recurrent propagation (YOGO), plus a small training / evaluation harness."""

from .data import FrameSequence, TrainSample, degrade, ingest, synth_generate
from .loss import DecomposedTarget, charbonnier, decompose, total_loss
from .metrics import MetricReport, param_count, psnr, ssim
from .model import ModelConfig, SequenceState, YOGO, YOGOOutput
from .ops import ConfigError, deform_conv
from .resize import bicubic_resize

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DecomposedTarget", "FrameSequence", "MetricReport", "ModelConfig",
    "SequenceState", "TrainSample", "YOGO", "YOGOOutput", "bicubic_resize", "charbonnier",
    "decompose", "deform_conv", "degrade", "ingest", "param_count", "psnr", "ssim",
    "synth_generate", "total_loss",
]
