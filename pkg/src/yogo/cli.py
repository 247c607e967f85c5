"""Command-line entry point.

Exit codes: 0 success, 1 check failure, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import DataError, export_sequences, ingest, synth_generate
from .harness import ablate, gradcheck
from .harness.checkpoint import load_checkpoint
from .harness.config import load_config
from .harness.evaluate import evaluate_model, write_metrics
from .harness.train import make_run_dir, train
from .metrics import param_count
from .ops import ConfigError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3

logger = logging.getLogger("yogo")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(**{"run.seed": args.seed})
    run_dir = make_run_dir(cfg.run.seed, args.run_root)
    result = train(cfg, run_dir=run_dir, overfit_one=args.overfit_one, log_every=args.log_every)
    trace = result.trace.rows
    print(f"run directory: {run_dir}")
    if trace:
        print(f"iterations: {trace[-1]['iteration']}  initial loss: {trace[0]['total']:.5f}  "
              f"final loss: {trace[-1]['total']:.5f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    model = ckpt.build_model().eval()
    seqs = list(ingest(args.data))
    if not seqs:
        raise DataError(f"no complete septuplets under {args.data}")
    run_dir = Path(args.out) if args.out else make_run_dir(ckpt.config.run.seed, args.run_root)
    run_dir.mkdir(parents=True, exist_ok=True)
    mode = "luma601" if args.luma else ckpt.config.eval.channel_mode
    dump = run_dir / "outputs" if args.save_png else None
    results = evaluate_model(model, seqs, mode, dump_dir=dump)
    payload = write_metrics(results, run_dir / "metrics.json",
                            extra={"checkpoint": str(args.ckpt), "epoch": ckpt.epoch})
    print(json.dumps(payload["aggregate"], indent=2))
    print(f"metrics: {run_dir / 'metrics.json'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_all(seed=args.seed)
    print(gradcheck.format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}")
        return EXIT_CHECK
    return EXIT_OK


def cmd_ablate(args) -> int:
    spec = ablate.load_grid(args.grid)
    rows = ablate.run_grid(spec)
    text = ablate.format_csv(rows)
    run_dir = make_run_dir(spec.budget.seed, args.run_root)
    (run_dir / "ablation.csv").write_text(text)
    print(text, end="")
    print(f"table: {run_dir / 'ablation.csv'}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    seqs = synth_generate(args.seed, args.count, args.height, args.width)
    folders = export_sequences(seqs, args.out)
    print(f"wrote {len(folders)} sequences to {args.out}")
    return EXIT_OK


def cmd_params(args) -> int:
    cfg = load_config(args.config)
    total, breakdown = param_count(cfg.model)
    for name, n in breakdown.items():
        print(f"{name:<16} {n:>10d}")
    print(f"{'total':<16} {total:>10d}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yogo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--overfit-one", action="store_true")
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--run-root", help="defaults to $YOGO_RUN_DIR or ./runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a septuplet directory")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--luma", action="store_true", help="evaluate on BT.601 luma")
    p.add_argument("--out", help="output directory (default: a new run directory)")
    p.add_argument("--save-png", action="store_true")
    p.add_argument("--run-root")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and compare an ablation grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--run-root")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="export synthetic septuplets as PNG folders")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("params", help="print the parameter count of a config")
    p.add_argument("--config")
    p.set_defaults(func=cmd_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
