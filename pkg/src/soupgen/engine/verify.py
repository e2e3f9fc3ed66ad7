"""Bounded verification of a unit proof by exhaustive path enumeration."""
from __future__ import annotations

import sys
import time

from ..minic import ast as A
from ..minic.index import ProjectIndex, statement_lines
from ..proof import UnitProof
from .executor import ChoiceTrail, EngineError, Executor, FixedChoices
from .program import Program, ProgramError, build_program
from .report import ResourceBudget, VerificationReport, Witness
from .semantics import DomainConfig
from .unroll import unroll

_RECURSION_LIMIT = 20000


def unrolled_bodies(prog: Program) -> dict:
    fns = dict(prog.functions)
    fns["harness"] = prog.harness
    return unroll(fns, prog.bounds)


def verify(proof: UnitProof, index: ProjectIndex, budget: ResourceBudget = None,
           domains: DomainConfig = None, witnesses: bool = True) -> VerificationReport:
    budget = budget or ResourceBudget()
    domains = domains or DomainConfig()
    try:
        prog = build_program(proof, index)
    except ProgramError as exc:
        return VerificationReport("error", diagnostic=str(exc))
    return verify_program(prog, budget, domains, witnesses)


def verify_program(prog: Program, budget: ResourceBudget, domains: DomainConfig,
                   witnesses: bool = True) -> VerificationReport:
    start = time.monotonic()
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, _RECURSION_LIMIT))
    try:
        return _enumerate(prog, budget, domains, witnesses, start)
    finally:
        sys.setrecursionlimit(old_limit)


def _enumerate(prog, budget, domains, witnesses, start) -> VerificationReport:
    bodies = unrolled_bodies(prog)
    scope_lines = {}
    for fn in prog.functions.values():
        owners = scope_lines.setdefault(fn.file, {})
        for line in statement_lines(fn):
            owners[line] = fn.name
    trail = ChoiceTrail()
    lines: set = set()
    covered: set = set()
    violated: dict = {}  # key -> assignment of the first violating path
    paths: dict = {}  # key -> number of violating paths
    saturated: set = set()
    states = 0
    feasible = 0
    breached = False
    while True:
        trail.reset()
        ex = Executor(prog, bodies, domains, trail)
        try:
            end = ex.run()
        except (EngineError, RecursionError) as exc:
            rep = VerificationReport("error", checks=prog.checks, diagnostic=str(exc) or "recursion",
                                     states=states, wall_time=time.monotonic() - start,
                                     scope_lines=scope_lines)
            return rep
        states += 1
        feasible += end != "pruned"
        lines |= ex.lines
        covered |= ex.covered
        saturated |= ex.saturated
        for key in set(ex.violated):
            paths[key] = paths.get(key, 0) + 1
            if key not in violated:
                violated[key] = dict(ex.assignment)
        if not trail.advance():
            break
        if states >= budget.state_budget or time.monotonic() - start > budget.wall_time:
            breached = True
            break

    by_key = prog.check_by_key
    covered_ids = frozenset(by_key[k].id for k in covered if k in by_key)
    violated_ids = frozenset(by_key[k].id for k in violated if k in by_key)
    incomplete = incomplete_checks(prog, saturated)
    verified_ids = frozenset() if breached else covered_ids - violated_ids - incomplete
    violations = []
    for key, assignment in violated.items():
        check = by_key[key]
        trace = replay_trace(prog, bodies, domains, assignment) if witnesses else []
        violations.append((check, Witness(assignment, trace)))
    violations.sort(key=lambda cw: cw[0])
    if breached:
        status = "inconclusive-budget"
    elif violations:
        status = "violations-found"
    else:
        status = "verified"
    covered_lines: dict = {}
    for f, ln in lines:
        covered_lines.setdefault(f, set()).add(ln)
    return VerificationReport(
        status, violations, {f: sorted(v) for f, v in covered_lines.items()}, prog.checks,
        covered_ids, violated_ids, incomplete, verified_ids, frozenset(saturated),
        time.monotonic() - start, states, breached, "", scope_lines,
        {by_key[k].id: n for k, n in paths.items() if k in by_key}, feasible,
    )


def explore(prog: Program, budget: ResourceBudget, domains: DomainConfig, on_path,
            observe=()) -> bool:
    """Enumerate every path, calling ``on_path(executor, end)``; True if the budget ran out."""
    bodies = unrolled_bodies(prog)
    trail = ChoiceTrail()
    start = time.monotonic()
    states = 0
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, _RECURSION_LIMIT))
    try:
        while True:
            trail.reset()
            ex = Executor(prog, bodies, domains, trail)
            ex.observe = frozenset(observe)
            end = ex.run()
            on_path(ex, end)
            states += 1
            if not trail.advance():
                return False
            if states >= budget.state_budget or time.monotonic() - start > budget.wall_time:
                return True
    finally:
        sys.setrecursionlimit(old_limit)


def replay_trace(prog, bodies, domains, assignment) -> list:
    ex = Executor(prog, bodies, domains, FixedChoices(assignment), trace=True)
    ex.run()
    return ex.trace


def replay(prog: Program, domains: DomainConfig, assignment: dict) -> Executor:
    """Run a single path under a fixed assignment; returns the finished executor."""
    ex = Executor(prog, unrolled_bodies(prog), domains, FixedChoices(assignment))
    ex.run()
    return ex


def incomplete_checks(prog: Program, saturated) -> frozenset:
    """Checks whose verdict a pruned saturated path could still change.

    That is every check in or after a saturated loop in its function, in
    functions called from there, and after the callsites leading to it.
    """
    fns = dict(prog.functions)
    fns["harness"] = prog.harness
    callsites = {}  # callee -> [(caller, line)]
    for name, fn in fns.items():
        for c in A.calls_in(fn.body):
            if c.name in fns:
                callsites.setdefault(c.name, []).append((name, c.line))
    regions: dict = {}  # function -> earliest affected line
    work = []
    for loop_id in saturated:
        fn, lp = prog.loops[loop_id]
        work.append((fn.name, lp.header_line))
    while work:
        name, line = work.pop()
        if name in regions and regions[name] <= line:
            continue
        regions[name] = line
        fn = fns[name]
        for c in A.calls_in(fn.body):
            if c.name in fns and c.line >= line:
                work.append((c.name, fns[c.name].line))
        for caller, cl in callsites.get(name, ()):
            work.append((caller, cl))
    out = set()
    for c in prog.checks:
        start = regions.get(c.function)
        if start is not None and c.line >= start:
            out.add(c.id)
    return frozenset(out)
