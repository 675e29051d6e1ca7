"""Command-line entry point: ``psychfit <stage> --input responses.csv --out DIR``."""

import argparse
import os
import sys

from .exceptions import PsychfitError
from .report import FORMATS, STAGES, PipelineConfig, StageError, load_dataset, run_pipeline, write_scored

COMMANDS = {
    "score": ("score",),
    "ctt": ("ctt",),
    "corr": ("corr",),
    "cfa": ("corr", "cfa"),
    "irt": ("irt",),
    "shorten": ("shorten",),
    "report": STAGES,
}


def _csv_list(text):
    return tuple(p.strip() for p in text.split(",") if p.strip())


def build_parser():
    parser = argparse.ArgumentParser(prog="psychfit", description="Psychometric validation of binary-scored tests.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "report" else "run the full pipeline")
        p.add_argument("--input", required=True, help="responses CSV")
        p.add_argument("--key", help="answer key CSV (default: built-in 25-item key)")
        p.add_argument("--factors", help="factor structure JSON (default: built-in six factors)")
        p.add_argument("--mode", choices=("raw", "prescored"), help="input cell type (default: auto-detect)")
        p.add_argument("--subsets", type=_csv_list, default=("all", "g3", "g4"), help="comma list of all,g3,g4,mixed")
        p.add_argument("--bootstrap", type=int, default=200, help="bootstrap replicates for the robust CFA statistic")
        p.add_argument("--quadrature", type=int, default=49, help="Gauss-Hermite nodes for IRT")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--format", type=_csv_list, default=FORMATS, help="comma list of json,csv")
        p.add_argument("--plan", default="builtin:cctt", help="shortening plan JSON or builtin:cctt")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.bootstrap < 0 or args.quadrature < 2:
        print("error: --bootstrap must be >= 0 and --quadrature >= 2", file=sys.stderr)
        return 2
    config = PipelineConfig(
        input=args.input,
        key=args.key,
        factors=args.factors,
        mode=args.mode,
        subsets=args.subsets,
        bootstrap=args.bootstrap,
        quadrature=args.quadrature,
        seed=args.seed,
        out=args.out,
        formats=args.format,
        plan=args.plan,
        stages=COMMANDS[args.command],
    )
    try:
        report = run_pipeline(config)
        if args.command == "score" and "csv" in config.formats:
            ds, _ = load_dataset(config)
            write_scored(ds, os.path.join(args.out, "scored.csv"))
    except StageError as exc:
        print(f"psychfit: {exc}", file=sys.stderr)
        return 1
    except (PsychfitError, OSError) as exc:
        print(f"psychfit: stage 'setup' failed: {exc}", file=sys.stderr)
        return 1
    print(f"psychfit {args.command}: wrote {len(report.tables) + 1} outputs to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
