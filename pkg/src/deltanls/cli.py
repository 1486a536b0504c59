"""Command-line entry point: ``deltanls constants|classify|simulate|sweep``."""

from __future__ import annotations

import argparse
import json
import sys

from .classifier import classify_evolving
from .exceptions import DeltaNLSError, PropagationError
from .harness import ExperimentConfig, SWEEP_COLUMNS, report_constants, run, sweep

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUN_FAILED = 3


def _parse_values(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deltanls", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("constants", help="print ground-state constants for power p")
    c.add_argument("p", type=float)

    k = sub.add_parser("classify", help="classify the initial data of a config")
    k.add_argument("config")

    s = sub.add_parser("simulate", help="run one experiment")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (overrides output.dir)")

    w = sub.add_parser("sweep", help="run a parameter sweep")
    w.add_argument("config")
    w.add_argument("--axis", required=True, help="dotted config path, e.g. initial_data.gamma")
    w.add_argument("--values", required=True, type=_parse_values, help="comma-separated numbers")
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--out", help="output directory (overrides output.dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "constants":
            print(report_constants(args.p))
        elif args.command == "classify":
            cfg = ExperimentConfig.load(args.config)
            clf = cfg["classifier"]
            verdict = classify_evolving(cfg.initial_field(), cfg.params, clf["t_probe"],
                                        clf["tol"], clf["max_doublings"])
            print(json.dumps(verdict.to_report(), indent=2))
        elif args.command == "simulate":
            cfg = ExperimentConfig.load(args.config)
            report = run(cfg, args.out)
            summary = {"verdict": report.verdict.label.value, "outcome": report.outcome.value,
                       "agreement": report.agreement, "halt_reason": report.halt_reason,
                       "halt_time": report.halt_time, "artifacts": report.artifacts}
            print(json.dumps(summary, indent=2))
        elif args.command == "sweep":
            cfg = ExperimentConfig.load(args.config)
            rows = sweep(cfg, args.axis, args.values, args.jobs, args.out)
            print(",".join(SWEEP_COLUMNS))
            for r in rows:
                print(",".join("" if r[col] is None else str(r[col]) for col in SWEEP_COLUMNS))
    except PropagationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED
    except (DeltaNLSError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
