"""Model and baseline evaluation on septuplets."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from ..data import FrameSequence, degrade, save_png
from ..metrics import MetricReport, _finite_mean, _json_float, evaluate_frames
from ..model import YOGO, YOGOOutput
from ..resize import bicubic_resize

INPUT_POSITIONS = (1, 3, 5, 7)
INTERPOLATED = (2, 4, 6)


@dataclass
class SequenceResult:
    name: str
    report: MetricReport
    speed: float | None = None

    def to_dict(self) -> dict:
        out = {"name": self.name, **self.report.to_dict()}
        for key, idx in (("input_positions", INPUT_POSITIONS), ("interpolated", INTERPOLATED)):
            sub = self.report.subset(idx)
            out[key] = {"mean_psnr_db": _json_float(sub.mean_psnr_db), "mean_ssim": sub.mean_ssim}
        return out


@torch.no_grad()
def predict(model: YOGO, lr: torch.Tensor) -> YOGOOutput:
    dtype = next(model.parameters()).dtype
    out = model(lr[None].to(dtype))
    return YOGOOutput(*(x[0] for x in out))


def bicubic_baseline(lr: torch.Tensor) -> torch.Tensor:
    """Bicubic x4 for input positions, mean of the neighbouring upsamples in between."""
    up = bicubic_resize(lr, 4.0)
    frames = [up[0]]
    for prev, nxt in zip(up[:-1], up[1:]):
        frames.append((prev + nxt) / 2)
        frames.append(nxt)
    return torch.stack(frames)


def evaluate_model(model: YOGO | None, sequences: Sequence[FrameSequence],
                   channel_mode: str = "rgb", dump_dir: Path | None = None) -> list[SequenceResult]:
    """Per-sequence metrics; ``model=None`` evaluates the bicubic baseline."""
    results = []
    for seq in sequences:
        sample = degrade(seq)
        if model is None:
            frames = bicubic_baseline(sample.lr)
        else:
            out = predict(model, sample.lr)
            frames = out.frames.float()
            if dump_dir is not None:
                dump_outputs(out, Path(dump_dir) / (seq.name or "seq"))
        report = evaluate_frames(frames.clamp(0, 1), seq.frames, channel_mode)
        results.append(SequenceResult(seq.name, report, seq.meta.get("speed")))
    return results


def mean_psnr(results: Sequence[SequenceResult], indices=None) -> float:
    values = []
    for r in results:
        rep = r.report.subset(indices) if indices else r.report
        values.extend(p for _, p, _ in rep.per_frame)
    return _finite_mean(values, "PSNR")


def summary(results: Sequence[SequenceResult]) -> dict:
    def block(indices):
        ssims = [s for r in results for i, _, s in r.report.per_frame
                 if indices is None or i in indices]
        return {"mean_psnr_db": _json_float(mean_psnr(results, indices)),
                "mean_ssim": sum(ssims) / len(ssims) if ssims else float("nan")}

    return {"all": block(None), "input_positions": block(INPUT_POSITIONS),
            "interpolated": block(INTERPOLATED)}


def dump_outputs(out: YOGOOutput, folder: Path) -> None:
    """Write frame, structure and detail PNGs per time index.

    ``detail_XX.png`` stores ``frame - structure + 0.5`` computed against the
    *quantised* structure, so adding the two PNGs (minus 0.5) recovers the
    frame PNG to within one quantisation step wherever
    ``|frame - structure| <= 0.5``. Larger differences saturate the detail
    PNG. The raw detail-head output is written to ``detail_head_XX.png`` with
    the same 0.5 offset.
    """
    folder.mkdir(parents=True, exist_ok=True)
    for t in range(out.frames.shape[0]):
        frame = out.frames[t].float().clamp(0, 1)
        structure = torch.round(out.structures[t].float().clamp(0, 1) * 255) / 255
        save_png(frame, folder / f"frame_{t + 1:02d}.png")
        save_png(structure, folder / f"structure_{t + 1:02d}.png")
        save_png(frame - structure + 0.5, folder / f"detail_{t + 1:02d}.png")
        save_png(out.details[t].float() + 0.5, folder / f"detail_head_{t + 1:02d}.png")


def write_metrics(results: Sequence[SequenceResult], path: Path, extra: dict | None = None) -> dict:
    payload = {
        "sequences": [r.to_dict() for r in results],
        "aggregate": summary(results),
        **(extra or {}),
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return payload
