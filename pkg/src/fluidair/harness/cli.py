"""Command-line entry point: ``run``, ``validate`` and ``oracle-suite``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from fluidair.errors import InvalidArgumentError
from fluidair.harness import config as config_mod
from fluidair.harness.experiment import run_experiment
from fluidair.harness.results import emit_results


def _load(path):
    if path is None:
        return config_mod.ExperimentConfig()
    return config_mod.load(path)


def cmd_run(args) -> int:
    cfg = _load(args.config)
    exp = cfg.experiment
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.out is not None:
        changes["out_dir"] = args.out
    if changes:
        cfg = replace(cfg, experiment=replace(exp, **changes))
    result = run_experiment(cfg)
    out = emit_results(result.rows, cfg.experiment.out_dir, result.summary, result.traces)
    (out / "config.ini").write_text(config_mod.to_ini(cfg))
    for method, info in result.summary["methods"].items():
        acc = info["final_test_accuracy"]
        sel = info["selected_count"]
        if acc["mean"] is None:
            print(f"{method:<11} {info['status']}")
        else:
            print(f"{method:<11} {info['status']:<8} acc {acc['mean']:.4f} +- {acc['std']:.4f}"
                  f"  selected {sel['mean']:.2f} +- {sel['std']:.2f}")
    print(f"wrote {out}")
    return 0 if all(i["status"] in ("ok", "external") for i in result.summary["methods"].values()) else 1


def cmd_validate(args) -> int:
    cfg = config_mod.load(args.config)
    again = config_mod.from_ini(config_mod.to_ini(cfg))
    if again != cfg:
        print("config does not round-trip", file=sys.stderr)
        return 1
    print(config_mod.to_ini(cfg), end="")
    return 0


def cmd_oracle_suite(args) -> int:
    from fluidair.harness.oracle_suite import run_all

    ok = True
    for name, passed, detail in run_all(seed=args.seed, quick=args.quick):
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok &= passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluidair", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a method x realization grid")
    run.add_argument("--config", help="INI file; defaults apply to missing keys")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--workers", type=int, help="parallel cells")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="parse a config and print it with defaults filled in")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)

    orc = sub.add_parser("oracle-suite", help="check closed forms and laws against numeric oracles")
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--quick", action="store_true", help="fewer random draws")
    orc.set_defaults(func=cmd_oracle_suite)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidArgumentError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
