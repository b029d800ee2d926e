"""Command line entry point: ``lfgadmm {run,compare,ccdf}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .data import DATA_DIR_ENV
from .experiment import SCHEMA_VERSION, ExperimentConfig, compare_schemes, run_experiment
from .netcost import ChannelModel, CostScheme, ccdf_experiment

log = logging.getLogger("lfgadmm")


def _load_config(path, args) -> ExperimentConfig:
    config = ExperimentConfig.load(path)
    changes = {}
    if getattr(args, "threads", None):
        changes["threads"] = args.threads
    if getattr(args, "data_dir", None):
        changes["dataset"] = config.dataset.__class__(
            **{**config.dataset.__dict__, "data_dir": args.data_dir})
    return config.replace(**changes) if changes else config


def cmd_run(args) -> int:
    config = _load_config(args.config, args)
    out = args.out or config.output_dir or str(Path("runs") / Path(args.config).stem)
    config = config.replace(output_dir=out, trace=args.trace or config.trace)
    result = run_experiment(config)
    last = result.metrics[-1] if result.metrics else None
    log.info("%s: %d rounds, final loss %s, accuracy %s, energy %.6g J -> %s",
             config.name, len(result.metrics), last and last.training_loss,
             last and last.test_accuracy, result.summary["total_energy_J"], out)
    return 0


def cmd_compare(args) -> int:
    configs = [_load_config(p, args).replace(output_dir=None) for p in args.configs]
    out = Path(args.out)
    comparison = compare_schemes(configs, max_workers=args.parallel, output_dir=out)
    for label, row in comparison.summary.items():
        log.info("%-14s acc=%s energy=%.6g J", label, row["final_test_accuracy"],
                 row["total_energy_J"])
    return 0


def cmd_ccdf(args) -> int:
    schemes = [CostScheme(f"L-FGADMM {b}x", "lfgadmm", b) for b in args.betas]
    schemes += [CostScheme("FL", "fl"), CostScheme("Standalone", "standalone")]
    channel = ChannelModel(args.tx_power, args.bandwidth, args.noise_density,
                           args.bits_per_element, args.d_min)
    result = ccdf_experiment(args.runs, schemes, channel, args.seed,
                             base_period=args.base_period, total_iterations=args.iterations,
                             n_workers=args.workers, area_side=args.area_side,
                             max_workers=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ccdf.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("scheme", "run_id", "total_energy_J", "ccdf_value"))
        for label, run_id, energy, cc in result.rows():
            writer.writerow((label, run_id, repr(energy), repr(cc)))
    summary = {"schema_version": SCHEMA_VERSION, "meta": result.meta, "schemes": result.summary()}
    (out / "ccdf_summary.json").write_text(json.dumps(summary, indent=2))
    for label, stats in result.summary().items():
        log.info("%-14s mean=%.6g J var=%.6g", label, stats["mean"], stats["variance"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfgadmm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config (JSON)")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default runs/<config stem>)")
    run.add_argument("--threads", type=int, help="threads for concurrent worker updates")
    run.add_argument("--data-dir", help=f"MNIST directory (overrides ${DATA_DIR_ENV})")
    run.add_argument("--trace", action="store_true", help="also write per-iteration trace.csv")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="run several configs and align their metrics")
    cmp_.add_argument("configs", nargs="+")
    cmp_.add_argument("--out", default="runs/compare")
    cmp_.add_argument("--parallel", type=int, default=1, help="experiments run concurrently")
    cmp_.add_argument("--threads", type=int)
    cmp_.add_argument("--data-dir")
    cmp_.set_defaults(func=cmd_compare)

    cc = sub.add_parser("ccdf", help="Monte-Carlo communication-energy CCDF")
    cc.add_argument("--runs", type=int, default=1000)
    cc.add_argument("--seed", type=int, default=0)
    cc.add_argument("--betas", type=int, nargs="+", default=[1, 2, 4])
    cc.add_argument("--base-period", type=int, default=5)
    cc.add_argument("--iterations", type=int, default=500)
    cc.add_argument("--workers", type=int, default=4)
    cc.add_argument("--area-side", type=float, default=100.0)
    cc.add_argument("--tx-power", type=float, default=1e-3)
    cc.add_argument("--bandwidth", type=float, default=1e6)
    cc.add_argument("--noise-density", type=float, default=1e-9)
    cc.add_argument("--bits-per-element", type=int, default=32)
    cc.add_argument("--d-min", type=float, default=1.0)
    cc.add_argument("--threads", type=int, default=1)
    cc.add_argument("--out", default="runs/ccdf")
    cc.set_defaults(func=cmd_ccdf)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
