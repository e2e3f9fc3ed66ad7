"""End-to-end driver: three stages, snapshots, metrics and exposure matching."""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .agent import StageLog, audit, make_resolver, scope_line_count
from .bounds import run_bound_stage
from .engine import DomainConfig, ResourceBudget, VerificationReport, verify
from .env import run_env_stage, with_preconditions
from .harness import HarnessError
from .minic.index import ProjectError, ProjectIndex, parse_project
from .minic.parser import MiniCSyntaxError
from .proof import (
    ManifestError, PreconditionTerm, ProofError, UnitProof, check_structural_validity,
    parse_manifest, serialize_manifest,
)
from .scope import run_scope_stage

ERRORS_SCHEMA = "soupgen.errors/1"
METRICS_SCHEMA = "soupgen.metrics/1"
EXPOSURE_SCHEMA = "soupgen.exposure/1"

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_INPUT = 3

STAGE_FILES = ("stage1.proof", "stage2.proof", "stage3.proof")


class InputError(Exception):
    """Bad project, entry, proof or sink specification."""


@dataclass
class StageSnapshot:
    name: str
    proof: UnitProof
    report: VerificationReport
    wall_time: float
    errors: int = 0


@dataclass
class GenerateResult:
    exit_code: int
    snapshots: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    suppressed: list = field(default_factory=list)
    unapplied: list = field(default_factory=list)
    log: StageLog = None
    message: str = ""

    def snapshot(self, name: str) -> StageSnapshot:
        return next(s for s in self.snapshots if s.name == name)


def load_project(path) -> ProjectIndex:
    try:
        index = parse_project(path)
    except (ProjectError, MiniCSyntaxError, OSError) as exc:
        raise InputError(str(exc)) from exc
    if index.type_errors:
        raise InputError("type errors: " + "; ".join(str(e) for e in index.type_errors[:5]))
    return index


def generate(project, entry: str, budget: ResourceBudget = None, domains: DomainConfig = None,
             resolver=None, out=None, index: ProjectIndex = None) -> GenerateResult:
    budget = budget or ResourceBudget()
    domains = domains or DomainConfig()
    resolver = resolver or make_resolver("rule")
    index = index or load_project(project)
    if not index.by_name(entry):
        raise InputError(f"entry {entry!r} not found in {project}")
    slog = StageLog()
    res = GenerateResult(EXIT_OK, log=slog)

    t0 = time.monotonic()
    try:
        s1 = run_scope_stage(index, entry, budget.max_file_depth, budget, domains, resolver, slog)
    except (HarnessError, ProofError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    if s1 is None:
        res.exit_code = EXIT_BUDGET
        res.message = "budget insufficient at level 0"
        _write(out, res, project, entry)
        return res
    res.snapshots.append(StageSnapshot("stage1", s1.proof, s1.report, time.monotonic() - t0))

    t1 = time.monotonic()
    s2 = run_bound_stage(index, s1.proof, s1.report, budget, domains, resolver, slog)
    res.unapplied = s2.unapplied
    res.snapshots.append(StageSnapshot("stage2", s2.proof, s2.report, time.monotonic() - t1))

    t2 = time.monotonic()
    s3 = run_env_stage(index, s2.proof, s2.report, budget, domains, resolver, slog)
    res.errors, res.suppressed = s3.errors, s3.suppressed
    res.snapshots.append(StageSnapshot("stage3", s3.proof, s3.report, time.monotonic() - t2,
                                       len(s3.errors)))
    missing = audit(slog.events)
    if missing:
        slog.note("pipeline", "mutations without accepted gate", count=len(missing))
    _write(out, res, project, entry, index)
    return res


# --- metrics -----------------------------------------------------------------


def stage_metrics(snap: StageSnapshot, index: ProjectIndex) -> dict:
    p, r = snap.proof, snap.report
    fns = [d for n in p.scope.functions for d in index.by_name(n) if d.file in p.scope.files]
    validity = check_structural_validity(p, index)
    return {
        "proof_size": p.size(),
        "functions_in_scope": len(p.scope.functions),
        "scope_level": p.scope.level,
        "custom_loop_bounds": len(p.bounds.bounds),
        "variable_models": len(p.env.input_model) + len(p.env.configs),
        "function_models": len(p.env.function_models),
        "preconditions": len(p.env.all_preconditions()),
        "component_lines": sum(d.end_line - d.line + 1 for d in fns),
        "covered_lines": scope_line_count(r),
        "total_properties": r.total_properties,
        "covered_properties": r.covered_properties,
        "verified_properties": r.verified_properties,
        "verified_ratio": round(r.ratio, 6),
        "reported_errors": snap.errors,
        "status": r.status,
        "structurally_valid": validity.valid,
        "conclusive": r.status in ("verified", "violations-found"),
        "wall_time": round(snap.wall_time, 6),
    }


def errors_document(res: GenerateResult, project, entry) -> dict:
    return {
        "schema_version": ERRORS_SCHEMA,
        "project": str(Path(project).resolve()),
        "entry": entry,
        "proof": "stage3.proof",
        "errors": [e.to_dict() for e in res.errors],
        "suppressed": res.suppressed,
    }


def metrics_document(res: GenerateResult, index: ProjectIndex) -> dict:
    return {
        "schema_version": METRICS_SCHEMA,
        "exit_code": res.exit_code,
        "message": res.message,
        "stages": {s.name: stage_metrics(s, index) for s in res.snapshots},
        "recommended_unapplied_bounds": [
            {"loop": lp, "bound": b, "reason": why} for lp, b, why in res.unapplied
        ],
    }


def _write(out, res: GenerateResult, project, entry, index=None) -> None:
    if out is None:
        return
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for snap, fname in zip(res.snapshots, STAGE_FILES):
        (out / fname).write_text(serialize_manifest(snap.proof), encoding="utf-8")
    if res.snapshots:
        final = res.snapshots[-1].report
        (out / "report.json").write_text(final.to_json(include_time=False) + "\n", encoding="utf-8")
    (out / "errors.json").write_text(_dump(errors_document(res, project, entry)), encoding="utf-8")
    metrics = metrics_document(res, index) if index is not None else {
        "schema_version": METRICS_SCHEMA, "exit_code": res.exit_code, "message": res.message,
        "stages": {}, "recommended_unapplied_bounds": []}
    (out / "metrics.json").write_text(_dump(metrics), encoding="utf-8")
    (out / "stagelog.json").write_text(res.log.to_json() + "\n", encoding="utf-8")


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- standalone verification ---------------------------------------------------


def load_proof(path) -> UnitProof:
    try:
        return parse_manifest(Path(path).read_text(encoding="utf-8"))
    except (ManifestError, ProofError, OSError) as exc:
        raise InputError(f"cannot read proof {path}: {exc}") from exc


def verify_proof(proof_path, project, budget: ResourceBudget = None,
                 domains: DomainConfig = None, index: ProjectIndex = None) -> VerificationReport:
    """Re-verify a saved snapshot against the project sources."""
    index = index or load_project(project)
    proof = load_proof(proof_path) if not isinstance(proof_path, UnitProof) else proof_path
    known_files = {u.path for u in index.files}
    missing = sorted(set(proof.scope.files) - known_files)
    if missing:
        raise InputError(f"proof references missing files: {', '.join(missing)}")
    for name in sorted(proof.scope.functions):
        if not [d for d in index.by_name(name) if d.file in proof.scope.files]:
            raise InputError(f"proof references missing function {name!r}")
    report = verify(proof, index, budget, domains)
    if report.status == "error":
        raise InputError(report.diagnostic)
    return report


# --- exposure ------------------------------------------------------------------


def parse_sink(text: str) -> tuple:
    parts = text.rsplit(":", 2)
    if len(parts) != 3 or not parts[0] or not parts[1].isdigit() or not parts[2]:
        raise InputError(f"malformed sink {text!r}; expected FILE:LINE:KIND")
    return parts[0], int(parts[1]), parts[2]


def _at(prop: dict, sink: tuple) -> bool:
    return (prop["file"], prop["line"], prop["kind"]) == sink


def match_exposure(errors_path, sink, budget: ResourceBudget = None,
                   domains: DomainConfig = None) -> dict:
    """Whether a known bug at ``sink`` is exposed by the reported errors, and by which rule."""
    sink = parse_sink(sink) if isinstance(sink, str) else tuple(sink)
    try:
        doc = json.loads(Path(errors_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read errors file: {exc}") from exc
    if doc.get("schema_version") != ERRORS_SCHEMA:
        raise InputError("errors file has an unknown schema version")
    result = {"schema_version": EXPOSURE_SCHEMA, "sink": list(sink)}
    errors = doc["errors"]
    for e in errors:
        if _at(e["property"], sink) and e["rejected_precondition"]:
            return {**result, "exposed": True, "criterion": "i", "error": e["property"]["id"]}
    for e in errors:
        if _at(e["property"], sink) and not e["rejected_precondition"]:
            return {**result, "exposed": True, "criterion": "iii", "error": e["property"]["id"]}
    others = [e for e in errors if not _at(e["property"], sink) and e["retained_precondition"]]
    if others:
        index = load_project(doc["project"])
        proof = load_proof(Path(errors_path).parent / doc["proof"])
        for e in others:
            drop = {PreconditionTerm.parse(t) for t in e["retained_precondition"]}
            kept = [t for t in proof.env.all_preconditions() if t not in drop]
            probe = replace(proof, env=with_preconditions(proof.env, kept))
            rep = verify(probe, index, budget, domains, witnesses=False)
            if any((c.file, c.line, c.kind) == sink for c in rep.checks if c.id in rep.violated_ids):
                return {**result, "exposed": True, "criterion": "ii", "error": e["property"]["id"]}
    if any((s["file"], s["line"], s["kind"]) == sink for s in doc.get("suppressed", [])):
        return {**result, "exposed": False, "reason": "unexploitable"}
    return {**result, "exposed": False, "reason": "no matching error"}


def default_out(project, entry) -> str:
    return os.path.join("soupgen-out", f"{Path(project).name}-{entry}")
