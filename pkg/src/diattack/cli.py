"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 nothing feasible, 4 numerical
failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .detector import DetectorConfig
from .errors import DiaError, InvalidParameter
from .modelio import load_model, run_manifest
from .plant import closed_loop_report
from .sweep import (
    AttackSpec,
    auto_lambda_grid,
    pareto_sweep,
    records_to_csv,
    run_detection,
    to_json,
    vulnerability_report,
)

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


def parse_lambdas(text):
    """``"auto"`` or a comma-separated list of numbers."""
    if text is None or text.strip().lower() == "auto":
        return None
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidParameter(f"cannot parse lambda list {text!r}") from None
    if not values:
        raise InvalidParameter("empty lambda list")
    return values


def _single_lambda(args):
    values = parse_lambdas(args.lam)
    if values is None or len(values) != 1:
        raise InvalidParameter("this subcommand needs exactly one --lambda value")
    return values[0]


def _detector(args):
    return DetectorConfig(alpha_target=args.alpha, n_samples=args.samples, seed=args.seed)


def _emit(args, payload, manifest, records=None):
    """Write JSON, or CSV plus a sidecar manifest when records are given."""
    if args.format == "csv":
        if records is None:
            raise InvalidParameter(f"'{args.command}' has no CSV form; use --format json")
        text = records_to_csv(records)
        if args.out:
            Path(args.out).write_text(text)
            side = Path(str(args.out) + ".manifest.json")
            side.write_text(json.dumps(manifest, indent=2, sort_keys=True, allow_nan=False) + "\n")
        else:
            sys.stdout.write(text)
        return
    text = to_json(payload, manifest)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_synthesize(args, model):
    report = closed_loop_report(model.closed_loop)
    _emit(args, {"closed_loop": report}, run_manifest(model, args.seed))
    return EXIT_OK


def _grid(args, model, kind):
    values = parse_lambdas(args.lam)
    if values is not None:
        return values
    if kind == "single" and args.index is not None:
        return auto_lambda_grid(model, index=args.index).tolist()
    return auto_lambda_grid(model).tolist()


def cmd_attack(args, model):
    lam = _single_lambda(args)
    rows = pareto_sweep(model, args.kind, [lam], index=args.index, k=args.k)
    payload = {"records": [r.as_dict() for r in rows]}
    _emit(args, payload, run_manifest(model, args.seed, {"command": "attack"}), rows)
    return EXIT_OK if rows[0].feasible else EXIT_INFEASIBLE


def cmd_pareto(args, model):
    grid = _grid(args, model, args.kind)
    cfg = _detector(args) if args.detect else None
    rows = pareto_sweep(model, args.kind, grid, cfg, index=args.index, k=args.k)
    extra = {"command": "pareto", "lambda_grid": [float(v) for v in grid]}
    if cfg is not None:
        extra["detector"] = {"alpha": cfg.alpha_target, "samples": cfg.n_samples}
    _emit(args, {"records": [r.as_dict() for r in rows]}, run_manifest(model, args.seed, extra), rows)
    return EXIT_OK if any(r.feasible for r in rows) else EXIT_INFEASIBLE


def cmd_detect(args, model):
    spec = AttackSpec(args.kind, _single_lambda(args), args.index, args.k)
    cfg = _detector(args)
    result, rec = run_detection(model, spec, cfg)
    payload = {
        "detection": {
            "tau": result.tau,
            "p_detect": result.p_detect,
            "p_false_alarm": result.p_false_alarm,
            "n_samples": result.n_samples,
            "standard_error": result.standard_error,
        },
        "records": [rec.as_dict()],
    }
    extra = {"command": "detect", "detector": {"alpha": cfg.alpha_target, "samples": cfg.n_samples}}
    _emit(args, payload, run_manifest(model, args.seed, extra), [rec])
    return EXIT_OK


def cmd_report(args, model):
    grid = parse_lambdas(args.lam)
    cfg = _detector(args) if args.detect else None
    report = vulnerability_report(model, grid, cfg)
    extra = {"command": "report", "verdicts": report["verdicts"], "group_verdicts": report["group_verdicts"]}
    manifest = run_manifest(model, args.seed, extra)
    _emit(args, {"report": report}, manifest, _report_records(report))
    return EXIT_OK


def _report_records(report):
    rows = [d for curve in report["measurements"].values() for d in curve]
    rows += [d for g in report["groups"].values() for d in g["curve"]]
    return rows


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="cstr-table1", help="model file or 'cstr-table1' (default)")
    common.add_argument("--lambda", dest="lam", default=None, help="'auto' or comma-separated values")
    common.add_argument("--k", type=int, default=None, help="sparsity for sparse attacks")
    common.add_argument("--index", type=int, default=None, help="measurement index for single attacks (0-based)")
    common.add_argument("--alpha", type=float, default=0.05, help="false-alarm target (default 0.05)")
    common.add_argument("--samples", type=int, default=20000, help="Monte-Carlo samples (default 20000)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="json")

    parser = argparse.ArgumentParser(
        prog="diattack", description="Design and detect data-injection attacks on observer-based control loops.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synthesize", parents=[common], help="gains and stationary moments")
    for name, helptext in (("attack", "build one attack"), ("pareto", "sweep lambda"),
                           ("detect", "Monte-Carlo detection experiment")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("kind", choices=("full", "single", "sparse"))
        if name == "pareto":
            p.add_argument("--detect", action="store_true", help="attach Monte-Carlo detection rates")
    p = sub.add_parser("report", parents=[common], help="vulnerability ranking")
    p.add_argument("--detect", action="store_true", help="attach Monte-Carlo detection rates")
    return parser


COMMANDS = {
    "synthesize": cmd_synthesize,
    "attack": cmd_attack,
    "pareto": cmd_pareto,
    "detect": cmd_detect,
    "report": cmd_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "kind", None) == "sparse" and args.k is None:
            raise InvalidParameter("sparse attacks need --k")
        model = load_model(args.model)
        return COMMANDS[args.command](args, model)
    except DiaError as exc:
        print(f"diattack: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"diattack: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except np.linalg.LinAlgError as exc:
        print(f"diattack: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
