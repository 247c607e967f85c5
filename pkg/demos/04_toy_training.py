"""
Training on synthetic septuplets
================================

A short run on moving sinusoid scenes, compared with the bicubic baseline
(bicubic x4 for input positions, the average of neighbouring upsamples for
interpolated frames). Pass an iteration count to train longer; the
acceptance gate uses 2000.
"""

import sys

from yogo.harness.ablate import ToyBudget
from yogo.harness.evaluate import INPUT_POSITIONS, INTERPOLATED, evaluate_model, mean_psnr
from yogo.harness.train import train

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 200
budget = ToyBudget(iterations=iterations)
cfg = budget.run_config(budget.model_config(variant="e"))
print(f"training {iterations} iterations, batch {cfg.data.batch_size}, "
      f"patch {cfg.data.patch_height}x{cfg.data.patch_width}")

result = train(cfg, sequences=budget.train_sequences(), log_every=50)
rows = result.trace.rows
print(f"loss {rows[0]['total']:.4f} -> {rows[-1]['total']:.4f} in {result.seconds:.0f} s")

test = budget.test_sequences()
model = evaluate_model(result.model, test)
base = evaluate_model(None, test)
for label, idx in (("all", None), ("input", INPUT_POSITIONS), ("interp", INTERPOLATED)):
    print(f"{label:>6}: model {mean_psnr(model, idx):.2f} dB   bicubic {mean_psnr(base, idx):.2f} dB")
