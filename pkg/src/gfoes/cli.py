"""Command-line entry point: ``gfoes {train,unlearn,baseline,ablate,eval,audit}``.

Exit status is 0 on success, 1 for a bad config (or a failed audit) and 2
when training produced non-finite values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .baselines import METHODS
from .config import ExperimentConfig, load_config
from .errors import ConfigError, NumericError
from .experiment import UNLEARN_METHODS, audit_run, reevaluate, run_ablation, run_experiment, train_only

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _parser():
    ap = argparse.ArgumentParser(prog="gfoes", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in [("train", "train the original model and write the data splits"),
                        ("unlearn", "run GFOES and the enabled baselines"),
                        ("baseline", "run the enabled baselines only"),
                        ("ablate", "run the ablation grid"),
                        ("eval", "recompute metrics from a run directory"),
                        ("audit", "check run.json against recomputed metrics and the zero-glance log")]:
        p = sub.add_parser(name, help=help_)
        if name in ("eval", "audit"):
            p.add_argument("--out", required=True, help="run directory")
            continue
        p.add_argument("--config", help="TOML or JSON config file (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        if name != "train":
            p.add_argument("--methods", help="comma-separated methods or ablation cells")
    return ap


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = cfg.with_seed(args.seed)
    if args.out:
        cfg = cfg.with_output(args.out)
    return cfg


def _methods(arg, allowed):
    if not arg:
        return None
    items = [m.strip() for m in arg.split(",") if m.strip()]
    bad = [m for m in items if m not in allowed]
    if bad:
        raise ConfigError(f"--methods: unknown entries {bad}; allowed {list(allowed)}")
    return tuple(items)


def _summary(record):
    rows = {"theta0": record["theta0"]}
    rows.update(record.get("methods", {}))
    for name, r in rows.items():
        if r.get("status", "ok") != "ok":
            print(f"{name:28s} aborted: {r.get('error')}")
        else:
            print(f"{name:28s} AD_f={r['AD_f']:.4f} AD_r={r['AD_r']:.4f}")


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command in ("eval", "audit"):
            if not (Path(args.out) / "run.json").exists():
                raise ConfigError(f"{args.out}: no run.json found")
            if args.command == "eval":
                _, results = reevaluate(args.out, write=True)
                print(json.dumps({k: [v["AD_f"], v["AD_r"]] for k, v in results.items()}, indent=2))
                return EXIT_OK
            report = audit_run(args.out)
            print(json.dumps(report, indent=2))
            return EXIT_OK if report["ok"] else EXIT_CONFIG
        cfg = _config(args)
        if args.command == "train":
            record = train_only(cfg)
        elif args.command == "unlearn":
            methods = _methods(args.methods, UNLEARN_METHODS + METHODS)
            record = run_experiment(cfg, methods or UNLEARN_METHODS + cfg.enabled_baselines)
        elif args.command == "baseline":
            methods = _methods(args.methods, METHODS)
            record = run_experiment(cfg, methods or cfg.enabled_baselines, command="baseline")
        else:
            record = run_ablation(cfg, _methods(args.methods, cfg.ablation_cells))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _summary(record)
    return EXIT_NUMERIC if record["status"] == "aborted" else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
