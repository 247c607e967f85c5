"""Acceptance criteria, each at its stated tolerance.

Every test records one pass/fail line; the lines are repeated in the
"acceptance criteria" section of the pytest terminal summary.
"""

import math
import time

import pytest
import torch
from torch.nn import functional as F

from yogo.data import synth_generate
from yogo.harness import ablate, gradcheck
from yogo.harness.checkpoint import load_checkpoint, save_checkpoint
from yogo.harness.config import RunConfig
from yogo.harness.evaluate import evaluate_model, mean_psnr
from yogo.harness.train import train
from yogo.loss import decompose, total_loss
from yogo.metrics import param_count, psnr, ssim
from yogo.model import ModelConfig, YOGO
from yogo.ops import deform_conv

PUBLISHED_PARAMS = 9.5e6


def test_criterion_1_gradient_suite(criterion_log):
    start = time.perf_counter()
    results = gradcheck.run_all()
    seconds = time.perf_counter() - start
    print(gradcheck.format_table(results))
    required = {"bilinear_sample", "deform_conv", "offset_estimator", "residual_block", "se_gate",
                "fuse_1x1", "dfu", "fru", "hfb", "reconstruct", "total_loss", "end_to_end"}
    names = {r.name for r in results}
    worst = max(results, key=lambda r: r.max_rel_err / r.tol)
    ok = required <= names and all(r.passed for r in results) and seconds < 600
    criterion_log(1, "gradient suite", ok,
                  f"{len(results)} ops, worst {worst.name} {worst.max_rel_err:.2e} "
                  f"(tol {worst.tol:.0e}), {seconds:.0f} s")
    assert required <= names
    assert all(r.passed for r in results), [r.name for r in results if not r.passed]
    assert seconds < 600


def test_criterion_2_zero_offset_equivalence(criterion_log):
    gen = torch.Generator().manual_seed(2)
    worst = 0.0
    for _ in range(20):
        n = int(torch.randint(1, 3, (1,), generator=gen))
        cin, cout = (int(v) for v in torch.randint(1, 6, (2,), generator=gen))
        h, w = (int(v) for v in torch.randint(3, 12, (2,), generator=gen))
        x = torch.randn(n, cin, h, w, generator=gen, dtype=torch.float64)
        weight = torch.randn(cout, cin, 3, 3, generator=gen, dtype=torch.float64)
        bias = torch.randn(cout, generator=gen, dtype=torch.float64)
        off = torch.zeros(n, 18, h, w, dtype=torch.float64)
        diff = (deform_conv(x, off, weight, bias) - F.conv2d(x, weight, bias, padding=1)).abs().max()
        worst = max(worst, diff.item())
    criterion_log(2, "zero-offset equivalence", worst <= 1e-6, f"max abs diff {worst:.1e} over 20 cases")
    assert worst <= 1e-6


def test_criterion_3_sequence_arithmetic(criterion_log):
    torch.manual_seed(0)
    model = YOGO(ModelConfig(channels=8, frb_backward=1, frb_forward=1, hfb_count=1,
                             fe_resblocks=1)).eval()
    shapes = {}
    ok = True
    for n_in in (2, 3, 4):
        with torch.no_grad():
            out = model(torch.rand(1, n_in, 3, 8, 12))
        want = (1, 2 * (n_in - 1) + 1, 3, 32, 48)
        shapes[n_in] = out.frames.shape[1]
        ok &= all(tuple(t.shape) == want for t in out)
    criterion_log(3, "sequence arithmetic", ok,
                  ", ".join(f"{k} in -> {v} out" for k, v in shapes.items()))
    assert ok


def test_criterion_4_decomposition_exactness(criterion_log):
    gen = torch.Generator().manual_seed(4)
    hr = torch.rand(2, 7, 3, 16, 16, generator=gen, dtype=torch.float64)
    target = decompose(hr)
    # exact up to the one rounding of the subtraction that produced the detail
    mag = torch.maximum(target.structure.abs(), target.detail.abs()).maximum(hr.abs())
    ulp = torch.nextafter(mag, torch.tensor(math.inf, dtype=torch.float64)) - mag
    exact = bool(((target.structure + target.detail - hr).abs() <= ulp).all())
    errors = []
    for n in (1, 2, 3):
        t = decompose(hr[:, : 2 * n + 1])
        loss = total_loss((t.frame, t.structure, t.detail), t).total.item()
        errors.append(abs(loss - 3 * (2 * n + 1) * 1e-3))
    ok = exact and max(errors) <= 1e-9
    criterion_log(4, "decomposition exactness", ok,
                  f"recomposition within 1 ulp: {exact}, perfect-loss error {max(errors):.1e}")
    assert ok


def _toy_spec(**grid) -> ablate.GridSpec:
    return ablate.GridSpec(budget=ablate.ToyBudget(), **grid)


def _baseline_psnr(budget: ablate.ToyBudget) -> float:
    return mean_psnr(evaluate_model(None, budget.test_sequences()))


@pytest.mark.slow
def test_criterion_5_toy_training_gate(criterion_log, toy_cache):
    spec = _toy_spec(variant=["e"])
    budget = spec.budget
    assert (budget.channels, budget.frb_backward, budget.frb_forward, budget.hfb_count) == (16, 2, 3, 3)
    assert (budget.train_count, budget.height, budget.width, budget.iterations) == (64, 64, 64, 2000)
    assert budget.test_count == 16
    start = time.perf_counter()
    (row,) = ablate.run_grid(spec, toy_cache)
    minutes = (time.perf_counter() - start) / 60
    base = _baseline_psnr(budget)
    gain = row.psnr["all"] - base
    ok = gain >= 1.0 and minutes <= 45
    criterion_log(5, "toy training gate", ok,
                  f"model {row.psnr['all']:.2f} dB vs bicubic {base:.2f} dB, gain {gain:+.2f} dB "
                  f"(input {row.psnr['input']:.2f}, interp {row.psnr['interp']:.2f}), "
                  f"{minutes:.1f} min")
    assert gain >= 1.0
    assert minutes <= 45


@pytest.mark.slow
def test_criterion_6_ablation_direction(criterion_log, toy_cache):
    rows = ablate.run_grid(_toy_spec(variant=["e", "a"]), toy_cache)
    e, a = (r.psnr["all"] for r in rows)
    (swapped,) = ablate.run_grid(_toy_spec(variant=["e"], cell_order=["fru_then_dfu"]), toy_cache)
    f = swapped.psnr["all"]
    ok = e >= a and e >= f
    criterion_log(6, "ablation direction", ok,
                  f"(e) {e:.2f} vs (a) {a:.2f} dB; dfu_then_fru {e:.2f} vs fru_then_dfu {f:.2f} dB")
    assert e >= a
    assert e >= f


def test_criterion_7_metric_oracles(criterion_log):
    gen = torch.Generator().manual_seed(7)
    img = torch.rand(3, 32, 32, generator=gen, dtype=torch.float64) * 0.8
    p = psnr(img, img + 0.1)
    s_self = ssim(img, img)
    c1, c2 = 0.2, 0.4
    k1, k2 = 0.01 ** 2, 0.03 ** 2
    closed = (2 * c1 * c2 + k1) * k2 / ((c1 ** 2 + c2 ** 2 + k1) * k2)
    s_const = ssim(torch.full((3, 16, 16), c1, dtype=torch.float64),
                   torch.full((3, 16, 16), c2, dtype=torch.float64))
    ok = abs(p - 20.0) <= 1e-6 and s_self == 1.0 and abs(s_const - closed) <= 1e-9
    criterion_log(7, "metric oracles", ok,
                  f"psnr {p:.9f} dB, ssim(x,x) {s_self}, constant ssim error {abs(s_const - closed):.1e}")
    assert ok


def test_criterion_8_determinism_and_persistence(criterion_log, tmp_path):
    flat = {"model.channels": 4, "model.frb_backward": 1, "model.frb_forward": 1,
            "model.hfb_count": 1, "model.fe_resblocks": 1, "data.batch_size": 2,
            "data.patch_height": 16, "data.patch_width": 16, "data.synth_count": 4,
            "data.synth_height": 32, "data.synth_width": 32, "optim.total_epochs": 2,
            "run.seed": 11}
    cfg = RunConfig().with_overrides(**flat)
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    res = train(cfg, run_dir=a)
    train(cfg, run_dir=b)
    same_csv = (a / "loss.csv").read_bytes() == (b / "loss.csv").read_bytes()

    path = save_checkpoint(tmp_path / "m.ckpt", res.model, cfg, epoch=2)
    restored = load_checkpoint(path).build_model().eval()
    lr = torch.rand(1, 4, 3, 8, 8, generator=torch.Generator().manual_seed(8))
    with torch.no_grad():
        same_out = all(torch.equal(x, y) for x, y in zip(res.model(lr), restored(lr)))
    ok = same_csv and same_out
    criterion_log(8, "determinism and persistence", ok,
                  f"loss.csv identical: {same_csv}, checkpoint forward identical: {same_out}")
    assert ok


def test_criterion_9_param_count_diagnostic(criterion_log):
    cfg = ModelConfig(channels=56, frb_backward=4, frb_forward=6, hfb_count=9)
    total, parts = param_count(cfg)
    deviation = (total - PUBLISHED_PARAMS) / PUBLISHED_PARAMS
    in_range = 5e6 <= total <= 15e6
    print({k: v for k, v in parts.items()})
    # informational only: the published architecture under-specifies head and estimator internals
    criterion_log(9, "parameter count (diagnostic)", True,
                  f"{total / 1e6:.3f} M vs published 9.5 M ({deviation:+.0%}); "
                  f"within [5 M, 15 M]: {in_range}")
    assert total == param_count(cfg)[0]
