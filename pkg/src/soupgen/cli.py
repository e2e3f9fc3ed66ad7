"""Command line entry point: ``soupgen generate | verify | expose``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .agent import make_resolver
from .engine import DomainConfig, ResourceBudget
from .pipeline import (
    EXIT_BUDGET, EXIT_INPUT, EXIT_OK, InputError, default_out, generate, match_exposure,
    verify_proof,
)


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    defaults = ResourceBudget()
    p = argparse.ArgumentParser(prog="soupgen", description="Unit-proof generation for MiniC components.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a unit proof for one entry function")
    g.add_argument("--project", required=True, metavar="DIR")
    g.add_argument("--entry", required=True, metavar="NAME")
    g.add_argument("--scope-depth", type=_positive_int, default=defaults.max_file_depth, metavar="N")
    g.add_argument("--time-budget", type=_positive_float, default=defaults.wall_time, metavar="SECS")
    g.add_argument("--state-budget", type=_positive_int, default=defaults.state_budget, metavar="N")
    g.add_argument("--domain-cap", type=_positive_int, default=DomainConfig().int_cap, metavar="N")
    g.add_argument("--resolver", choices=("rule", "remote"), default="rule")
    g.add_argument("--endpoint", metavar="URL")
    g.add_argument("--out", metavar="DIR")

    v = sub.add_parser("verify", help="re-verify a saved proof snapshot")
    v.add_argument("--project", required=True, metavar="DIR")
    v.add_argument("--proof", required=True, metavar="FILE")

    e = sub.add_parser("expose", help="check whether reported errors expose a known sink")
    e.add_argument("--errors", required=True, metavar="FILE")
    e.add_argument("--sink", required=True, metavar="FILE:LINE:KIND")
    return p


def _generate(args) -> int:
    if args.resolver == "remote" and not args.endpoint:
        raise InputError("--resolver remote requires --endpoint")
    budget = ResourceBudget(args.time_budget, args.state_budget, args.scope_depth)
    domains = DomainConfig(int_cap=args.domain_cap, alloc_cap=args.domain_cap)
    events = []
    resolver = make_resolver(args.resolver, args.endpoint, events)
    out = args.out or default_out(args.project, args.entry)
    res = generate(args.project, args.entry, budget, domains, resolver, out)
    for ev in events:
        res.log.add("agent", ev.pop("event"), **ev)
    if events:
        (Path(out) / "stagelog.json").write_text(res.log.to_json() + "\n", encoding="utf-8")
    if res.exit_code == EXIT_BUDGET:
        print(f"soupgen: {res.message}", file=sys.stderr)
        return EXIT_BUDGET
    final = res.snapshots[-1]
    print(json.dumps({"out": out, "status": final.report.status, "errors": len(res.errors),
                      "preconditions": [str(t) for t in final.proof.env.all_preconditions()],
                      "bounds": final.proof.bounds.as_dict()}, sort_keys=True))
    return EXIT_OK


def _verify(args) -> int:
    report = verify_proof(args.proof, args.project)
    print(report.to_json(include_time=False))
    return EXIT_OK


def _expose(args) -> int:
    print(json.dumps(match_exposure(args.errors, args.sink), sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return {"generate": _generate, "verify": _verify, "expose": _expose}[args.command](args)
    except InputError as exc:
        print(f"soupgen: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
