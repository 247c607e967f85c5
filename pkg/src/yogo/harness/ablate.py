"""Ablation grid: train every model variant under one small shared budget and
tabulate held-out PSNR per motion-speed split.

Grid file (TOML)::

    [grid]
    variant = ["a", "b", "c", "d", "e"]
    frb_split = ["2+3"]
    cell_order = ["dfu_then_fru"]
    hfb_count = [3]

    [budget]
    iterations = 2000
    channels = 16

Missing grid axes fall back to the budget's defaults; the grid is the
cartesian product of the listed axes.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from ..data import FrameSequence, synth_generate
from ..metrics import param_count
from ..model import CELL_ORDERS, VARIANTS, ModelConfig
from ..ops import ConfigError
from .config import RunConfig
from .evaluate import INPUT_POSITIONS, INTERPOLATED, SequenceResult, evaluate_model, mean_psnr
from .train import TrainResult, train

logger = logging.getLogger(__name__)

FRB_SPLITS = ("0+10", "2+8", "4+6", "6+4", "8+2", "10+0")
# speed thresholds (px/frame at HR) for the slow / medium / fast test splits
SPEED_SPLITS = (("slow", 0.0, 1.0), ("medium", 1.0, 2.0), ("fast", 2.0, float("inf")))


@dataclass
class ToyBudget:
    iterations: int = 2000
    channels: int = 16
    frb_backward: int = 2
    frb_forward: int = 3
    hfb_count: int = 3
    fe_resblocks: int = 5
    batch_size: int = 8
    patch: int = 32
    lr: float = 4e-3
    seed: int = 0
    train_count: int = 64
    test_count: int = 16
    height: int = 64
    width: int = 64
    train_seed: int = 0
    test_seed: int = 10_000

    def model_config(self, **overrides) -> ModelConfig:
        base = dict(channels=self.channels, frb_backward=self.frb_backward,
                    frb_forward=self.frb_forward, hfb_count=self.hfb_count,
                    fe_resblocks=self.fe_resblocks)
        base.update(overrides)
        return ModelConfig(**base).validate()

    def run_config(self, model: ModelConfig) -> RunConfig:
        cfg = RunConfig(model=model)
        return cfg.with_overrides(**{
            "model.channels": model.channels,
            "optim.lr": self.lr,
            "optim.max_iterations": self.iterations,
            "optim.total_epochs": 10**9,
            "optim.decay_every_epochs": 10**9,
            "data.batch_size": self.batch_size,
            "data.patch_height": self.patch,
            "data.patch_width": self.patch,
            "data.synth_count": self.train_count,
            "data.synth_height": self.height,
            "data.synth_width": self.width,
            "data.synth_seed": self.train_seed,
            "run.seed": self.seed,
        })

    def train_sequences(self) -> list[FrameSequence]:
        return synth_generate(self.train_seed, self.train_count, self.height, self.width)

    def test_sequences(self) -> list[FrameSequence]:
        return synth_generate(self.test_seed, self.test_count, self.height, self.width)


@dataclass
class GridSpec:
    variant: list[str] = field(default_factory=lambda: ["e"])
    frb_split: list[str] = field(default_factory=list)
    cell_order: list[str] = field(default_factory=lambda: ["dfu_then_fru"])
    hfb_count: list[int] = field(default_factory=list)
    budget: ToyBudget = field(default_factory=ToyBudget)

    def cells(self) -> list[ModelConfig]:
        splits = self.frb_split or [f"{self.budget.frb_backward}+{self.budget.frb_forward}"]
        hfbs = self.hfb_count or [self.budget.hfb_count]
        out = []
        for variant, split, order, hfb in itertools.product(self.variant, splits,
                                                            self.cell_order, hfbs):
            back, fwd = parse_split(split)
            out.append(self.budget.model_config(variant=variant, frb_backward=back,
                                                frb_forward=fwd, cell_order=order,
                                                hfb_count=hfb))
        return out


def parse_split(text: str) -> tuple[int, int]:
    try:
        back, fwd = (int(x) for x in str(text).split("+"))
    except ValueError as exc:
        raise ConfigError(f"FRB split must look like '4+6', got {text!r}") from exc
    if back < 0 or fwd < 0:
        raise ConfigError(f"FRB counts must be >= 0, got {text!r}")
    return back, fwd


def parse_grid(data: dict) -> GridSpec:
    unknown = set(data) - {"grid", "budget"}
    if unknown:
        raise ConfigError(f"unknown grid section(s): {sorted(unknown)}")
    grid = dict(data.get("grid", {}))
    axes = {"variant", "frb_split", "cell_order", "hfb_count"}
    bad = set(grid) - axes
    if bad:
        raise ConfigError(f"unknown grid key(s): {sorted(bad)}")
    for key, value in grid.items():
        if not isinstance(value, list) or not value:
            raise ConfigError(f"grid.{key} must be a non-empty list")
    for v in grid.get("variant", []):
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    for o in grid.get("cell_order", []):
        if o not in CELL_ORDERS:
            raise ConfigError(f"unknown cell_order {o!r}")
    for s in grid.get("frb_split", []):
        parse_split(s)
    budget_fields = {f.name: f for f in dataclasses.fields(ToyBudget)}
    budget_kwargs = {}
    for key, value in data.get("budget", {}).items():
        if key not in budget_fields:
            raise ConfigError(f"unknown budget key {key!r}")
        default = budget_fields[key].default
        if isinstance(default, float) and isinstance(value, int):
            value = float(value)
        if type(value) is not type(default):
            raise ConfigError(f"budget.{key} must be {type(default).__name__}")
        budget_kwargs[key] = value
    spec = GridSpec(budget=ToyBudget(**budget_kwargs), **grid)
    spec.cells()  # validates every combination
    return spec


def load_grid(path: str | Path) -> GridSpec:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"grid file {path} not found") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_grid(data)


def split_psnr(results: list[SequenceResult]) -> dict[str, float]:
    out = {}
    for name, lo, hi in SPEED_SPLITS:
        subset = [r for r in results if r.speed is not None and lo <= r.speed < hi]
        out[name] = mean_psnr(subset) if subset else float("nan")
    out["all"] = mean_psnr(results)
    out["input"] = mean_psnr(results, INPUT_POSITIONS)
    out["interp"] = mean_psnr(results, INTERPOLATED)
    return out


def cell_key(cfg: ModelConfig) -> tuple:
    return tuple(sorted(cfg.to_dict().items()))


def train_cell(cfg: ModelConfig, budget: ToyBudget,
               train_seqs: list[FrameSequence] | None = None) -> TrainResult:
    seqs = train_seqs if train_seqs is not None else budget.train_sequences()
    return train(budget.run_config(cfg), sequences=seqs)


@dataclass
class CellResult:
    config: ModelConfig
    psnr: dict[str, float]
    params: int
    seconds: float


def run_grid(spec: GridSpec, cache: dict | None = None) -> list[CellResult]:
    """Train and evaluate every cell; ``cache`` maps cell_key -> CellResult."""
    cache = {} if cache is None else cache
    budget = spec.budget
    train_seqs = budget.train_sequences()
    test_seqs = budget.test_sequences()
    rows = []
    for cfg in spec.cells():
        key = (cell_key(cfg), dataclasses.astuple(budget))
        if key not in cache:
            logger.info("training cell variant=%s frb=%d+%d order=%s hfb=%d", cfg.variant,
                        cfg.frb_backward, cfg.frb_forward, cfg.cell_order, cfg.hfb_count)
            res = train_cell(cfg, budget, train_seqs)
            psnr = split_psnr(evaluate_model(res.model, test_seqs))
            cache[key] = CellResult(cfg, psnr, param_count(cfg)[0], res.seconds)
        rows.append(cache[key])
    return rows


CSV_COLUMNS = ("model", "variant", "frb_split", "cell_order", "hfb_count",
               "single_direction", "bidirection", "bidirectional_interaction",
               "direct_fusion", "sd_fusion",
               "psnr_slow", "psnr_medium", "psnr_fast", "psnr_all", "psnr_input", "psnr_interp",
               "params")


def format_csv(rows: list[CellResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        c = r.config
        writer.writerow([
            f"Model ({c.variant})", c.variant, f"{c.frb_backward}+{c.frb_forward}", c.cell_order,
            c.hfb_count,
            int(not c.forward_sweep), int(c.forward_sweep and not c.interactive),
            int(c.interactive), int(not c.uses_hfm), int(c.uses_hfm),
            *(f"{r.psnr[k]:.4f}" for k in ("slow", "medium", "fast", "all", "input", "interp")),
            r.params,
        ])
    return buf.getvalue()
