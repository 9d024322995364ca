"""Command line interface: ``pfdavg run | validate | reproduce``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .model import CaseId, check_validity, derive_rates, load_case, params_from_dict
from .petri import build_case_net, format_trace
from .petri.montecarlo import DEFAULT_HISTORIES
from .petri.rng import history_seed
from .report import CASES, EngineError, emit, parse_methods, reproduce, run_case

EXIT_OK, EXIT_INPUT, EXIT_ENGINE, EXIT_TOLERANCE = 0, 1, 2, 3


class InputError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("PFD_SEED")
    if raw is None:
        return 42
    try:
        return int(raw, 0)
    except ValueError:
        raise InputError(f"PFD_SEED must be an integer, got {raw!r}") from None


def _load_inputs(args) -> list[tuple[str, object]]:
    if args.input:
        try:
            with open(args.input, encoding="utf-8") as fh:
                data = json.load(fh)
            params = params_from_dict(data)
        except (OSError, json.JSONDecodeError, ValueError) as exc:
            raise InputError(f"{args.input}: {exc}") from exc
        name = os.path.splitext(os.path.basename(args.input))[0]
        return [(name, params)]
    cases = CASES if args.case in (None, "all") else (args.case,)
    out = []
    for case in cases:
        try:
            out.append((case, load_case(case)))
        except KeyError as exc:
            raise InputError(str(exc)) from exc
    return out


def _write(text: str, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    if args.case is None and args.input is None:
        raise InputError("one of --case or --input is required")
    try:
        methods = parse_methods(args.method)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if args.histories < 2:
        raise InputError("--histories must be >= 2")
    seed = args.seed if args.seed is not None else _default_seed()
    rows = []
    for name, params in _load_inputs(args):
        rows.append(run_case(params, methods, name=name, histories=args.histories, seed=seed,
                             workers=args.workers, backend=args.backend))
        if args.trace:
            with open(args.trace, "a", encoding="utf-8") as fh:
                fh.write(f"# case {name}, history 0, seed {seed}\n")
                fh.write(format_trace(build_case_net(params), params.t0, history_seed(seed, 0)))
    _write(emit(rows, args.format), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    lines = []
    for name, params in _load_inputs(args):
        rates = derive_rates(params)
        warns = check_validity(params)
        products = (f"lambda_DUT*T1 = {rates.lambda_dut * params.t1:.3e}, "
                    f"lambda_DUU*T0 = {rates.lambda_duu * params.t0:.3e}")
        if warns:
            lines.append(f"case {name}: WARN " + "; ".join(str(w) for w in warns))
        else:
            lines.append(f"case {name}: OK ({products})")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    checks = reproduce(histories=args.histories, seed=seed, workers=args.workers,
                       include_petri=not args.skip_petri, backend=args.backend)
    text = "\n".join(c.line() for c in checks)
    failed = sum(not c.passed for c in checks)
    text += f"\n{len(checks) - failed}/{len(checks)} checks passed\n"
    _write(text, args.out)
    return EXIT_OK if failed == 0 else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfdavg",
        description="Average probability of dangerous failure on demand of M-out-of-N subsystems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(p):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--case", choices=[c.value for c in CaseId] + ["all"],
                         help="built-in case (i..vi) or 'all'")
        src.add_argument("--input", metavar="FILE.json", help="flat JSON parameter file")

    def add_mc(p):
        p.add_argument("--histories", type=int, default=DEFAULT_HISTORIES,
                       help="Monte Carlo histories for the Petri engine (default %(default)s)")
        p.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                       help="master seed (default: $PFD_SEED or 42)")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--backend", choices=["compiled", "python"], default=None,
                       help="Petri kernel (default: compiled when built)")

    run = sub.add_parser("run", help="compute PFDavg with one or more methods")
    add_source(run)
    run.add_argument("--method", default="all",
                     help="analytic|faulttree|markov|petri|all (comma-separated allowed)")
    add_mc(run)
    run.add_argument("--format", choices=["csv", "json"], default="csv")
    run.add_argument("--out", metavar="FILE")
    run.add_argument("--trace", metavar="FILE", help="append the event log of Petri history 0")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check the validity conditions of the approximate equations")
    add_source(val)
    val.add_argument("--out", metavar="FILE")
    val.set_defaults(func=cmd_validate)

    rep = sub.add_parser("reproduce", help="run all six cases and check the reference results")
    add_mc(rep)
    rep.add_argument("--skip-petri", action="store_true", help="deterministic engines only")
    rep.add_argument("--out", metavar="FILE")
    rep.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
