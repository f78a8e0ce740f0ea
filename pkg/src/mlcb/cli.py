"""Command-line entry points: run experiments, validate configs, print oracles."""

from __future__ import annotations

import argparse
import sys

import yaml

from .harness import (
    ExperimentConfig,
    oracle_table_text,
    run_experiment,
    validate_config,
)


def _load_raw(path: str) -> dict:
    with open(path) as fh:
        return yaml.safe_load(fh) or {}


def _add_run_parser(sub) -> None:
    p = sub.add_parser("run", help="execute every (procedure x M x seed) cell")
    p.add_argument("config", help="YAML experiment config")
    p.add_argument("--seed-count", type=int, default=None)
    p.add_argument("--M", type=str, default=None, help="comma-separated budgets, e.g. 1,2,3")
    p.add_argument("--procedure", type=str, default=None)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--threads", type=int, default=1)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mlcb")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_parser(sub)

    v = sub.add_parser("validate", help="check a config and print diagnostics")
    v.add_argument("config")

    o = sub.add_parser("oracle", help="print the per-expert optimal-loss table")
    o.add_argument("config")
    o.add_argument("--samples", type=int, default=1_000_000)

    args = parser.parse_args(argv)

    if args.command == "validate":
        cfg = ExperimentConfig.from_dict(_load_raw(args.config))
        diags = validate_config(cfg)
        for d in diags:
            print(d)
        print("ok" if not diags else f"{len(diags)} problem(s)")
        return 0 if not diags else 1

    if args.command == "oracle":
        cfg = ExperimentConfig.from_dict(_load_raw(args.config))
        diags = validate_config(cfg)
        if diags:
            for d in diags:
                print(f"config error: {d}")
            return 1
        sys.stdout.write(oracle_table_text(cfg, n_samples=args.samples))
        return 0

    overrides = {}
    if args.seed_count is not None:
        raw = _load_raw(args.config)
        seeds = dict(raw.get("seeds", {}) or {})
        seeds["count"] = args.seed_count
        overrides["seeds"] = seeds
    if args.M is not None:
        overrides["M"] = [int(x) for x in args.M.split(",")]
    if args.procedure is not None:
        overrides["procedures"] = [args.procedure]
    if args.T is not None:
        overrides["T"] = args.T
    status, artifacts = run_experiment(
        args.config,
        out_dir=args.out,
        threads=args.threads,
        dry_run=args.dry_run,
        overrides=overrides,
    )
    if status == 0 and not args.dry_run:
        print(f"wrote {artifacts['summary']}")
    elif status == 2:
        print(f"completed with failed cells: {artifacts['failed_cells']}")
    return status


if __name__ == "__main__":
    raise SystemExit(main())
