"""Command-line entry point: ``pmederive derive spec.clk``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import report
from .invariants import generate_invariants
from .opspec import SpecError, load_spec, parse_spec
from .oracle import OracleError, check_derivation, random_instance

EXIT_OK, EXIT_USAGE, EXIT_DERIVATION = 0, 1, 2
FORMATS = ("text", "json", "latex", "dot")


def _sizes(text: str | None, default: int = 4):
    if text is None:
        return default
    if "=" not in text:
        return int(text)
    out = {}
    for part in text.split(","):
        k, v = part.split("=")
        out[k.strip()] = int(v)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pmederive", description="Derive PMEs, task graphs and loop invariants.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    d = sub.add_parser("derive", help="run the derivation pipeline on an operation description")
    d.add_argument("input", nargs="?", help="operation description file ('-' for stdin)")
    d.add_argument("--input", dest="input_opt", help="same as the positional argument")
    d.add_argument("--stage", choices=report.STAGES, default="invariants", help="last stage to report")
    d.add_argument("--pme", type=int, action="append", help="only report this PME (repeatable, 1-based)")
    d.add_argument("--format", choices=FORMATS, default="text")
    d.add_argument("--verify", action="store_true", help="check every PME cell and invariant on a random exact instance")
    d.add_argument("--seed", type=int, default=0, help="seed for --verify")
    d.add_argument("--size", default=None, help="instance size for --verify: N or m=3,n=4")
    d.add_argument("--out", help="write output to this file instead of stdout")
    return p


def _read(path: str):
    if path == "-":
        return parse_spec(sys.stdin.read(), "<stdin>")
    return load_spec(path)


def run_derive(args) -> int:
    path = args.input_opt or args.input
    if path is None:
        print("error: an input file is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        spec = _read(path)
    except SpecError as exc:
        print(exc.diagnostic(), file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    d = generate_invariants(spec)
    if args.pme:
        missing = [i for i in args.pme if not 1 <= i <= len(d.pmes)]
        if missing:
            print(f"error: no PME {missing[0]} (there are {len(d.pmes)})", file=sys.stderr)
            return EXIT_USAGE
    for note in d.diagnostics:
        print(f"note: {note}", file=sys.stderr)

    verification = None
    status = EXIT_OK if d.pmes else EXIT_DERIVATION
    if args.verify:
        try:
            sizes = _sizes(args.size)
            inst = random_instance(spec, sizes, seed=args.seed)
            res = check_derivation(d, inst, pmes=args.pme)
        except (OracleError, ValueError, KeyError) as exc:
            print(f"verification error: {exc}", file=sys.stderr)
            return EXIT_DERIVATION
        verification = {
            "passed": res.passed,
            "checks": res.checks,
            "failures": res.failures,
            "seed": args.seed,
            "sizes": dict(inst.sizes),
        }
        print(f"verify: {res.summary()}", file=sys.stderr)
        for f in res.failures[:20]:
            print(f"  {f}", file=sys.stderr)
        if not res.passed:
            status = EXIT_DERIVATION

    if args.format == "json":
        text = report.dumps(report.derivation_json(d, args.stage, args.pme, verification))
    elif args.format == "latex":
        text = report.derivation_latex(d, args.stage, args.pme)
    elif args.format == "dot":
        text = report.derivation_dot(d, args.pme)
    else:
        text = report.derivation_text(d, args.stage, args.pme)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "derive":
        return run_derive(args)
    return EXIT_USAGE
