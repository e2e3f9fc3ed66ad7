"""Stage 1: initial scope and resource-aware file-level widening."""
from __future__ import annotations

from dataclasses import dataclass

from .agent import SemanticTask, StageLog, handler
from .engine import DomainConfig, ResourceBudget, VerificationReport, verify
from .harness import model_external_callees, synthesize_input_model, type1_model
from .minic import ast as A
from .minic.index import INTRINSICS, ProjectIndex, common_prefix_len
from .proof import (
    EnvironmentModel, LoopBoundMap, UnitProof, VerificationScope, assemble,
    check_structural_validity, parse_harness, entry_calls,
)

STAGE = "scope"


def reachable(index: ProjectIndex, entry: A.FunctionDef, files) -> dict:
    """Functions reachable from ``entry`` whose definitions lie in ``files`` (name -> def)."""
    out = {entry.name: entry}
    work = [entry]
    while work:
        fn = work.pop()
        for call in A.calls_in(fn.body):
            if call.name in INTRINSICS or call.name in out:
                continue
            defs = [d for d in index.by_name(call.name) if d.file in files]
            if not defs:
                continue
            d = max(defs, key=lambda d: (common_prefix_len(d.file, fn.file), [-ord(c) for c in d.file]))
            out[call.name] = d
            work.append(d)
    return out


def _scope_defs(index, scope: VerificationScope) -> dict:
    entry = [d for d in index.by_name(scope.entry) if d.file in scope.files][0]
    return reachable(index, entry, scope.files)


def init_scope(index: ProjectIndex, entry_name: str, alloc_cap: int = 16):
    """Level-0 scope (entry file, entry-reachable), default bounds, type-directed environment."""
    entry = index.function(entry_name)
    fns = reachable(index, entry, {entry.file})
    scope = VerificationScope(entry.name, frozenset(fns), frozenset({entry.file}), 0)
    harness, specs = synthesize_input_model(entry, alloc_cap)
    models = model_external_callees(list(fns.values()), index, alloc_cap)
    env = EnvironmentModel(specs, tuple(models[k] for k in sorted(models)))
    return scope, LoopBoundMap.of({}, 1), env, harness


def within_budget(proof: UnitProof, index: ProjectIndex, budget: ResourceBudget,
                  domains: DomainConfig = None) -> tuple:
    report = verify(proof, index, budget, domains, witnesses=False)
    return report.status not in ("inconclusive-budget", "error"), report


def widen_by_one_file_level(scope: VerificationScope, index: ProjectIndex) -> VerificationScope:
    """Add the files defining currently modeled callees; keep only entry-reachable functions."""
    fns = _scope_defs(index, scope)
    new_files = set()
    for fn in fns.values():
        for call in A.calls_in(fn.body):
            if call.name in INTRINSICS or call.name in fns:
                continue
            defs = index.by_name(call.name)
            if not defs:
                continue
            best = max(defs, key=lambda d: (common_prefix_len(d.file, fn.file), [-ord(c) for c in d.file]))
            new_files.add(best.file)
    if not new_files - set(scope.files):
        return scope
    allowed = set(scope.files) | new_files
    entry = fns[scope.entry]
    wider = reachable(index, entry, allowed)
    if set(wider) == set(fns):
        return scope
    files = frozenset(d.file for d in wider.values())
    return VerificationScope(scope.entry, frozenset(wider), files, scope.level + 1)


def env_for_scope(scope, index, input_model, alloc_cap, previous: EnvironmentModel = None):
    """Environment for a scope: same inputs; Type1 models for its external callees."""
    fns = _scope_defs(index, scope)
    models = model_external_callees(list(fns.values()), index, alloc_cap)
    if previous is not None:
        for name in models:
            old = previous.model(name)
            if old is not None:
                models[name] = old
    return EnvironmentModel(input_model, tuple(models[k] for k in sorted(models)),
                            previous.preconditions if previous else (),
                            previous.configs if previous else ())


@dataclass
class ScopeResult:
    proof: UnitProof
    report: VerificationReport
    level: int


def _harness_ok(src: str, entry: str) -> bool:
    try:
        fn = parse_harness(src)
    except Exception:
        return False
    return entry_calls(fn, entry) == 1


def run_scope_stage(index: ProjectIndex, entry_name: str, d_max: int, budget: ResourceBudget,
                    domains: DomainConfig = None, resolver=None, slog: StageLog = None):
    """Largest scope at level <= d_max within budget, or None if level 0 already breaches."""
    from .agent import RuleResolver

    domains = domains or DomainConfig()
    resolver = resolver or RuleResolver()
    slog = slog if slog is not None else StageLog()
    scope, bounds, env, harness = init_scope(index, entry_name, domains.alloc_cap)

    task = SemanticTask("synthesize-input-model",
                        {"entry": entry_name, "alloc_cap": domains.alloc_cap,
                         "signature": _signature_text(index.function(entry_name))},
                        "Declare one nondet per primitive parameter and one bounded allocation per "
                        "pointer parameter; assume allocation success; call the entry exactly once; "
                        "add no other assumptions.",
                        {"index": index})
    proposal = resolver.resolve(task)
    slog.proposal(STAGE, proposal)
    if proposal.source != "rule" and not (_harness_ok(proposal.result, entry_name)
                                          and proposal.result.strip() == harness.strip()):
        slog.note(STAGE, "remote harness differs from the type-directed one; rule harness kept")
    proof = assemble(scope, bounds, env, harness, index)
    validity = check_structural_validity(proof, index)
    verdict_ok = validity.valid
    ok, report = within_budget(proof, index, budget, domains)
    gid = slog.gate(STAGE, "synthesize-input-model",
                    _verdict(verdict_ok, "structural invalidity" if not verdict_ok else "ok"),
                    level=0, states=report.states)
    if not verdict_ok:
        raise ValueError("synthesized proof is structurally invalid: " + "; ".join(validity.errors))
    if not ok:
        slog.note(STAGE, "level 0 exceeds the resource budget", states=report.states,
                  status=report.status)
        return None
    slog.mutation(STAGE, gid, "initial proof", level=0, functions=sorted(scope.functions))
    best = ScopeResult(proof, report, 0)
    for level in range(1, d_max + 1):
        wider = widen_by_one_file_level(best.proof.scope, index)
        if wider == best.proof.scope:
            slog.note(STAGE, "no modeled callee has a definition to widen into", level=level)
            break
        env2 = env_for_scope(wider, index, best.proof.env.input_model, domains.alloc_cap)
        candidate = assemble(wider, LoopBoundMap.of({}, 1), env2, best.proof.harness, index)
        validity = check_structural_validity(candidate, index)
        ok, rep = within_budget(candidate, index, budget, domains)
        accepted = validity.valid and ok
        reason = "ok" if accepted else ("structural invalidity" if not validity.valid else "budget exceeded")
        gid = slog.gate(STAGE, "widen-scope", _verdict(accepted, reason), level=level,
                        states=rep.states, files=sorted(wider.files))
        if not accepted:
            break
        slog.mutation(STAGE, gid, "widened scope", level=level, functions=sorted(wider.functions))
        best = ScopeResult(candidate, rep, level)
    return best


def _verdict(ok, reason):
    from .agent import GateVerdict

    return GateVerdict(ok, reason)


def _signature_text(fn: A.FunctionDef) -> str:
    params = ", ".join(f"{p.ty} {p.name}" for p in fn.params)
    return f"{fn.return_type} {fn.name}({params})"


@handler("synthesize-input-model")
def _resolve_input_model(task):
    index = task.context["index"]
    src, specs = synthesize_input_model(index.function(task.payload["entry"]), task.payload["alloc_cap"])
    return src, "type-directed: nondet primitives, bounded allocations for pointers"


@handler("model-external-callee")
def _resolve_external_model(task):
    index = task.context["index"]
    sig = index.signature(task.payload["name"])
    m = type1_model(sig, task.payload.get("alloc_cap", 16))
    return {"return": str(m.return_spec), "havoc": list(m.side_effects)}, "type-based Type1 model"
