"""Septuplet data: ingestion, synthetic generation, degradation, augmentation
and deterministic batching."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
from PIL import Image

from .loss import DecomposedTarget, decompose
from .ops import ConfigError
from .resize import bicubic_resize

logger = logging.getLogger(__name__)

SEPTUPLET = 7
SCALE = 4
PATCH_HW = (64, 112)


class DataError(RuntimeError):
    """Input data is missing or unreadable."""


@dataclass
class FrameSequence:
    """Frames ``(T, 3, H, W)`` in [0, 1] with 1-based temporal indices."""

    frames: torch.Tensor
    indices: tuple[int, ...] = ()
    tag: str = "HR"
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.frames.dim() != 4 or self.frames.shape[1] != 3:
            raise ConfigError(f"frames must be (T, 3, H, W), got {tuple(self.frames.shape)}")
        if not self.indices:
            self.indices = tuple(range(1, self.frames.shape[0] + 1))

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass
class TrainSample:
    lr: torch.Tensor  # (4, 3, h, w)
    target: DecomposedTarget  # tensors (7, 3, H, W)
    name: str = ""


def degrade(hr: FrameSequence) -> TrainSample:
    """Odd-indexed frames 1, 3, 5, 7 downscaled x4 become the LR input; all 7 are targets."""
    if len(hr) != SEPTUPLET:
        raise ConfigError(f"expected {SEPTUPLET} frames, got {len(hr)}")
    frames = hr.frames
    h, w = frames.shape[-2:]
    if h % SCALE or w % SCALE:
        raise ConfigError(f"frame size {h}x{w} not divisible by {SCALE}")
    lr = bicubic_resize(frames[0::2], 1.0 / SCALE, antialias=True)
    return TrainSample(lr=lr, target=decompose(frames, SCALE), name=hr.name)


# -- ingestion ---------------------------------------------------------------

def _load_png(path: Path) -> torch.Tensor:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def ingest(root: str | Path) -> Iterator[FrameSequence]:
    """Yield ``<root>/<seq>/im1..im7.png`` septuplets in lexicographic folder order.

    Folders missing any frame are skipped with a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"data root {root} is not a directory")
    for folder in sorted(p for p in root.iterdir() if p.is_dir()):
        paths = [folder / f"im{i}.png" for i in range(1, SEPTUPLET + 1)]
        missing = [p.name for p in paths if not p.is_file()]
        if missing:
            logger.warning("skipping %s: missing %s", folder, ", ".join(missing))
            continue
        frames = torch.stack([_load_png(p) for p in paths])
        yield FrameSequence(frames=frames, name=folder.name)


def to_uint8(img: torch.Tensor) -> np.ndarray:
    """``(3, H, W)`` in [0, 1] -> ``(H, W, 3)`` uint8, round-half-even."""
    arr = np.rint(img.detach().to(torch.float64).clamp(0, 1).numpy() * 255.0)
    return arr.astype(np.uint8).transpose(1, 2, 0)


def save_png(img: torch.Tensor, path: str | Path) -> None:
    Image.fromarray(to_uint8(img)).save(path, format="PNG")


def export_sequences(seqs: Sequence[FrameSequence], out_dir: str | Path) -> list[Path]:
    """Write sequences as ``<out>/<name>/im{1..7}.png``."""
    out_dir = Path(out_dir)
    written = []
    for i, seq in enumerate(seqs):
        folder = out_dir / (seq.name or f"{i:05d}")
        folder.mkdir(parents=True, exist_ok=True)
        for t in range(len(seq)):
            save_png(seq.frames[t], folder / f"im{t + 1}.png")
        written.append(folder)
    return written


# -- synthetic sequences ----------------------------------------------------

@dataclass
class SynthParams:
    """Analytic scene: oriented sinusoids plus Gaussian blobs, moving rigidly.

    The frame at time ``t`` (0-based) samples the scene at
    ``R(-omega*t) (p - c - v*t) + c`` for pixel centre ``p``.
    """

    amplitudes: np.ndarray  # (S, 3)
    wavevectors: np.ndarray  # (S, 2) radians per pixel, (ky, kx)
    phases: np.ndarray  # (S,)
    blob_centers: np.ndarray  # (B, 2)
    blob_sigmas: np.ndarray  # (B,)
    blob_amplitudes: np.ndarray  # (B, 3)
    velocity: tuple[float, float] = (0.0, 0.0)  # (vy, vx) pixels per frame
    omega: float = 0.0  # radians per frame
    offset: float = 0.5


def sample_synth_params(rng: np.random.Generator, height: int, width: int) -> SynthParams:
    n_sin = int(rng.integers(3, 7))
    wavelengths = rng.uniform(6.0, 28.0, n_sin)
    angles = rng.uniform(0, np.pi, n_sin)
    k = (2 * np.pi / wavelengths)[:, None] * np.stack([np.sin(angles), np.cos(angles)], axis=1)
    amps = rng.uniform(0.3, 1.0, (n_sin, 1)) * rng.uniform(0.4, 1.0, (n_sin, 3))
    n_blob = int(rng.integers(4, 9))
    centers = rng.uniform(0, 1, (n_blob, 2)) * [height, width]
    sigmas = rng.uniform(4.0, 10.0, n_blob)
    blob_amps = rng.uniform(-1.0, 1.0, (n_blob, 1)) * rng.uniform(0.4, 1.0, (n_blob, 3))
    # keep the peak excursion inside [0.05, 0.95] without clipping
    budget = np.abs(amps).sum(axis=0).max() + np.abs(blob_amps).sum(axis=0).max()
    norm = 0.45 / budget
    speed = rng.uniform(0.0, 3.0)
    heading = rng.uniform(0, 2 * np.pi)
    return SynthParams(
        amplitudes=amps * norm,
        wavevectors=k,
        phases=rng.uniform(0, 2 * np.pi, n_sin),
        blob_centers=centers,
        blob_sigmas=sigmas,
        blob_amplitudes=blob_amps * norm,
        velocity=(speed * math.sin(heading), speed * math.cos(heading)),
        omega=float(rng.uniform(-0.01, 0.01)),
    )


def render_scene(params: SynthParams, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Evaluate the static scene at scene coordinates; returns ``(3, *ys.shape)``."""
    out = np.full((3,) + ys.shape, params.offset, dtype=np.float64)
    for amp, (ky, kx), phase in zip(params.amplitudes, params.wavevectors, params.phases):
        wave = np.sin(ky * ys + kx * xs + phase)
        out += amp[:, None, None] * wave
    for (cy, cx), sigma, amp in zip(params.blob_centers, params.blob_sigmas, params.blob_amplitudes):
        blob = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sigma * sigma))
        out += amp[:, None, None] * blob
    return out


def render_sequence(params: SynthParams, height: int, width: int,
                    num_frames: int = SEPTUPLET, name: str = "") -> FrameSequence:
    py, px = np.meshgrid(np.arange(height, dtype=np.float64),
                         np.arange(width, dtype=np.float64), indexing="ij")
    cy, cx = (height - 1) / 2, (width - 1) / 2
    vy, vx = params.velocity
    frames = []
    for t in range(num_frames):
        dy, dx = py - cy - vy * t, px - cx - vx * t
        c, s = math.cos(params.omega * t), math.sin(params.omega * t)
        # rotate by -omega*t
        sy = c * dy - s * dx + cy
        sx = s * dy + c * dx + cx
        frames.append(render_scene(params, sy, sx))
    arr = np.clip(np.stack(frames), 0.0, 1.0).astype(np.float32)
    speed = math.hypot(vy, vx)
    return FrameSequence(frames=torch.from_numpy(arr), name=name,
                         meta={"speed": speed, "velocity": (vy, vx), "omega": params.omega})


def synth_generate(seed: int, count: int, height: int, width: int) -> list[FrameSequence]:
    """Deterministic synthetic septuplets; identical seeds give identical tensors."""
    if height % SCALE or width % SCALE:
        raise ConfigError(f"synthetic size {height}x{width} not divisible by {SCALE}")
    seqs = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        params = sample_synth_params(rng, height, width)
        seqs.append(render_sequence(params, height, width, name=f"{i:05d}"))
    return seqs


# -- augmentation and batching -------------------------------------------

def augment(hr: FrameSequence, seed, crop_hw: tuple[int, int] = PATCH_HW,
            flips: tuple[bool, bool, bool] | None = None) -> FrameSequence:
    """Random x4-aligned crop plus horizontal flip, vertical flip and 180
    degree rotation coin flips, identical for every frame.

    ``flips`` forces ``(hflip, vflip, rot180)`` instead of drawing them.
    """
    ch, cw = crop_hw
    _, _, h, w = hr.frames.shape
    if h < ch or w < cw:
        raise ConfigError(f"frames {h}x{w} smaller than crop {ch}x{cw}")
    rng = np.random.default_rng(seed)
    top = SCALE * int(rng.integers(0, (h - ch) // SCALE + 1))
    left = SCALE * int(rng.integers(0, (w - cw) // SCALE + 1))
    drawn = tuple(bool(b) for b in rng.integers(0, 2, 3))
    hflip, vflip, rot = flips if flips is not None else drawn
    x = hr.frames[:, :, top:top + ch, left:left + cw]
    if hflip:
        x = x.flip(-1)
    if vflip:
        x = x.flip(-2)
    if rot:
        x = x.rot90(2, dims=(-2, -1))
    meta = dict(hr.meta, crop=(top, left), flips=(hflip, vflip, rot))
    return FrameSequence(frames=x.contiguous(), indices=hr.indices, tag=hr.tag,
                         name=hr.name, meta=meta)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def batches(samples: Sequence, batch_size: int, seed: int, epoch: int = 0) -> Iterator[list]:
    """Seeded shuffle, fixed-size batches, last partial batch dropped."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    order = epoch_order(len(samples), seed, epoch)
    for start in range(0, len(order) - batch_size + 1, batch_size):
        yield [samples[i] for i in order[start:start + batch_size]]


def collate(samples: Sequence[TrainSample]) -> tuple[torch.Tensor, DecomposedTarget]:
    lr = torch.stack([s.lr for s in samples])
    target = DecomposedTarget(
        frame=torch.stack([s.target.frame for s in samples]),
        structure=torch.stack([s.target.structure for s in samples]),
        detail=torch.stack([s.target.detail for s in samples]),
    )
    return lr, target
