"""Verification reports, witnesses, budgets and coverage summaries."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .semantics import PropertyCheck

REPORT_SCHEMA = "soupgen.report/1"

STATUSES = ("verified", "violations-found", "inconclusive-budget", "error")


@dataclass(frozen=True)
class ResourceBudget:
    wall_time: float = 120.0
    state_budget: int = 20_000
    max_file_depth: int = 3

    def __post_init__(self):
        if self.wall_time <= 0 or self.state_budget <= 0 or self.max_file_depth <= 0:
            raise ValueError("budget fields must be strictly positive")


@dataclass
class Witness:
    nondet_assignment: dict
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"nondet_assignment": dict(sorted(self.nondet_assignment.items())),
                "trace": self.trace}


@dataclass
class VerificationReport:
    status: str
    violations: list = field(default_factory=list)  # (PropertyCheck, Witness)
    covered_lines: dict = field(default_factory=dict)  # file -> sorted line list
    checks: list = field(default_factory=list)  # every PropertyCheck
    covered_ids: frozenset = frozenset()
    violated_ids: frozenset = frozenset()
    incomplete_ids: frozenset = frozenset()
    verified_ids: frozenset = frozenset()
    saturated_loops: frozenset = frozenset()
    wall_time: float = 0.0
    states: int = 0
    budget_exceeded: bool = False
    diagnostic: str = ""
    scope_lines: dict = field(default_factory=dict)  # file -> {line: function} for in-scope code
    violation_paths: dict = field(default_factory=dict)  # check id -> number of violating paths
    feasible_paths: int = 0  # paths not cut off by an assumption or precondition

    @property
    def total_properties(self) -> int:
        return len(self.checks)

    @property
    def covered_properties(self) -> int:
        return len(self.covered_ids)

    @property
    def verified_properties(self) -> int:
        return len(self.verified_ids)

    @property
    def ratio(self) -> float:
        """Share of covered properties that are verified."""
        return self.verified_properties / self.covered_properties if self.covered_ids else 0.0

    def violated_checks(self) -> list:
        return [c for c, _ in self.violations]

    def witness_for(self, check_id: str):
        for c, w in self.violations:
            if c.id == check_id:
                return w
        return None

    def property_state(self, check: PropertyCheck) -> str:
        if check.id in self.violated_ids:
            return "violated"
        if check.id in self.verified_ids:
            return "verified"
        if check.id in self.incomplete_ids and check.id in self.covered_ids:
            return "incomplete"
        if check.id in self.covered_ids:
            return "unproven"
        return "uncovered"

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA,
            "status": self.status,
            "diagnostic": self.diagnostic,
            "violations": [
                {"check": check_dict(c), "witness": w.to_dict()} for c, w in self.violations
            ],
            "covered_lines": {f: sorted(ls) for f, ls in sorted(self.covered_lines.items())},
            "total_properties": self.total_properties,
            "covered_properties": self.covered_properties,
            "verified_properties": self.verified_properties,
            "saturated_loops": sorted(self.saturated_loops),
            "violation_paths": dict(sorted(self.violation_paths.items())),
            "properties": {c.id: self.property_state(c) for c in sorted(self.checks)},
            "resources": {"wall_time": round(self.wall_time, 6), "states": self.states,
                          "feasible_paths": self.feasible_paths,
                          "budget_exceeded": self.budget_exceeded},
        }

    def to_json(self, include_time: bool = True) -> str:
        d = self.to_dict()
        if not include_time:
            d["resources"].pop("wall_time")
        return json.dumps(d, indent=2, sort_keys=False)


def check_dict(c: PropertyCheck) -> dict:
    return {"id": c.id, "kind": c.kind, "file": c.file, "line": c.line,
            "function": c.function, "guard": c.guard}


# --- coverage --------------------------------------------------------------


@dataclass(frozen=True, order=True)
class UncoveredBlock:
    file: str
    start: int
    end: int
    function: str

    @property
    def first_uncovered_line(self) -> int:
        return self.start


@dataclass
class FileCoverage:
    file: str
    covered: list
    uncovered: list
    blocks: list  # UncoveredBlock


def coverage_report(report: VerificationReport) -> dict:
    """Per file: covered and uncovered statement lines, grouped into maximal uncovered blocks."""
    out = {}
    for f in sorted(report.scope_lines):
        owners = report.scope_lines[f]
        hit = set(report.covered_lines.get(f, ()))
        covered, uncovered, blocks = [], [], []
        run = None
        for line in sorted(owners):
            if line in hit:
                covered.append(line)
                if run:
                    blocks.append(UncoveredBlock(f, run[0], run[1], run[2]))
                    run = None
                continue
            uncovered.append(line)
            if run and run[2] == owners[line]:
                run[1] = line
            else:
                if run:
                    blocks.append(UncoveredBlock(f, run[0], run[1], run[2]))
                run = [line, line, owners[line]]
        if run:
            blocks.append(UncoveredBlock(f, run[0], run[1], run[2]))
        out[f] = FileCoverage(f, covered, uncovered, blocks)
    return out


def uncovered_blocks(report: VerificationReport) -> list:
    return [b for fc in coverage_report(report).values() for b in fc.blocks]
