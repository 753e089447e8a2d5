"""Command-line entry point: ``run``, ``print-defaults`` and ``validate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigurationError
from .harness import EXIT_CONFIG, EXIT_OK, WORKERS_ENV, Experiment, ExperimentConfig, \
    default_config, format_table, run_experiment, worker_count


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sqbilevel",
        description="Bilevel optimisation with superquantile-Gibbs minima selection.",
        epilog=f"Parallel runs: set {WORKERS_ENV}=N (default 1). Exit codes: 0 success, "
               "1 some runs or checks failed, 2 configuration error.")
    p.add_argument("-v", "--verbose", action="store_true", help="log each finished run")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out-dir", help="override out_dir from the config")
    run.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    pd = sub.add_parser("print-defaults", help="print a complete default config")
    pd.add_argument("--experiment", required=True, choices=[e.value for e in Experiment])
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "print-defaults":
        json.dump(default_config(args.experiment), sys.stdout, indent=2)
        sys.stdout.write("\n")
        return EXIT_OK
    try:
        if args.command == "validate":
            cfg = ExperimentConfig.load(args.config)
            print(f"ok: {cfg.experiment.value}, {len(cfg.settings())} settings x "
                  f"{len(cfg.methods)} methods x {len(cfg.seeds)} seeds")
            return EXIT_OK
        cfg = ExperimentConfig.load(args.config)
        if args.out_dir:
            raw = cfg.to_dict()
            raw["out_dir"] = args.out_dir
            cfg = ExperimentConfig.from_dict(raw)
        report = run_experiment(cfg, workers=worker_count(),
                                figures=False if args.no_figures else None)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(format_table(cfg, report.summary, report.slope))
    print(f"summary: {report.files['summary']}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
