"""Training loop, loss trace and run-directory handling."""

from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from ..data import DataError, FrameSequence, augment, batches, collate, degrade, ingest, synth_generate
from ..loss import total_loss
from ..model import YOGO
from .checkpoint import save_checkpoint
from .config import RunConfig, dump_config

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("iteration", "epoch", "total", "frame_term", "structure_term", "detail_term", "lr")


@dataclass
class LossTrace:
    rows: list[dict] = field(default_factory=list)

    def append(self, **row) -> None:
        if self.rows and row["iteration"] <= self.rows[-1]["iteration"]:
            raise ValueError("iterations must be strictly increasing")
        self.rows.append({k: row[k] for k in LOSS_COLUMNS})

    def tail(self, n: int = 10) -> list[dict]:
        return self.rows[-n:]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOSS_COLUMNS)
            for row in self.rows:
                writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k]
                                 for k in LOSS_COLUMNS])

    @classmethod
    def read_csv(cls, path: str | Path) -> "LossTrace":
        trace = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                trace.append(**{k: (int(rec[k]) if k in ("iteration", "epoch") else float(rec[k]))
                                for k in LOSS_COLUMNS})
        return trace


@dataclass
class TrainResult:
    model: YOGO
    trace: LossTrace
    run_dir: Path | None
    checkpoint: Path | None
    seconds: float


def make_run_dir(seed: int, root: str | Path | None = None) -> Path:
    """``<root>/<timestamp>_seed<seed>``, never reusing an existing directory."""
    root = Path(root or os.environ.get("YOGO_RUN_DIR") or "runs")
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = root / f"{stamp}_seed{seed}"
    path, k = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}_{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def load_training_sequences(cfg: RunConfig) -> list[FrameSequence]:
    if cfg.data.root:
        seqs = list(ingest(cfg.data.root))
    else:
        seqs = synth_generate(cfg.data.synth_seed, cfg.data.synth_count,
                              cfg.data.synth_height, cfg.data.synth_width)
    if not seqs:
        raise DataError("no training sequences found")
    return seqs


def _prune(ckpt_dir: Path, keep: int) -> None:
    if keep <= 0:
        return
    old = sorted(ckpt_dir.glob("epoch_*.ckpt"))[:-keep]
    for p in old:
        p.unlink()


def train(cfg: RunConfig, sequences: Sequence[FrameSequence] | None = None,
          run_dir: Path | None = None, overfit_one: bool = False,
          log_every: int = 0) -> TrainResult:
    """Train a fresh model under ``cfg``.

    With ``run_dir`` set, writes ``config.toml``, ``loss.csv`` and one
    checkpoint per epoch under ``run_dir/checkpoints``. ``overfit_one`` trains
    on the first sequence only, without augmentation.
    """
    cfg.validate()
    start = time.perf_counter()
    seed = cfg.run.seed
    torch.manual_seed(seed)
    model = YOGO(cfg.model)
    if cfg.run.dtype == "float64":
        model = model.double()
    dtype = next(model.parameters()).dtype
    opt = torch.optim.Adamax(model.parameters(), lr=cfg.optim.lr,
                             betas=(cfg.optim.beta1, cfg.optim.beta2), eps=cfg.optim.eps)

    seqs = list(sequences) if sequences is not None else load_training_sequences(cfg)
    if overfit_one:
        seqs = seqs[:1]
    crop = (cfg.data.patch_height, cfg.data.patch_width)
    use_aug = cfg.data.augment and not overfit_one
    fixed = None if use_aug else [degrade(s) for s in seqs]
    batch_size = min(cfg.data.batch_size, len(seqs))

    ckpt_dir = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        (run_dir / "config.toml").write_text(dump_config(cfg))
        ckpt_dir = run_dir / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)

    trace = LossTrace()
    iteration = 0
    limit = cfg.optim.max_iterations
    last_ckpt = None
    model.train()
    for epoch in range(cfg.optim.total_epochs):
        lr = cfg.optim.lr_at(epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        for batch in batches(list(range(len(seqs))), batch_size, seed, epoch):
            if use_aug:
                samples = [degrade(augment(seqs[i], [seed, epoch, int(i)], crop)) for i in batch]
            else:
                samples = [fixed[i] for i in batch]
            lr_frames, target = collate(samples)
            lr_frames, target = lr_frames.to(dtype), target.to(dtype)
            out = model(lr_frames)
            losses = total_loss(out, target)
            opt.zero_grad(set_to_none=True)
            losses.total.backward()
            opt.step()
            iteration += 1
            vals = losses.as_floats()
            trace.append(iteration=iteration, epoch=epoch + 1, total=vals["total"],
                         frame_term=vals["frame"], structure_term=vals["structure"],
                         detail_term=vals["detail"], lr=lr)
            if log_every and iteration % log_every == 0:
                logger.info("iter %d epoch %d loss %.5f lr %.1e", iteration, epoch + 1,
                            vals["total"], lr)
            if limit and iteration >= limit:
                break
        if ckpt_dir is not None:
            last_ckpt = save_checkpoint(ckpt_dir / f"epoch_{epoch + 1:04d}.ckpt", model, cfg,
                                        epoch=epoch + 1, iteration=iteration,
                                        loss_tail=trace.tail())
            _prune(ckpt_dir, cfg.run.keep_checkpoints)
            trace.write_csv(run_dir / "loss.csv")
        if limit and iteration >= limit:
            break
    model.eval()
    return TrainResult(model=model, trace=trace, run_dir=run_dir, checkpoint=last_ckpt,
                       seconds=time.perf_counter() - start)
