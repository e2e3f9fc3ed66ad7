"""Stage 2: cover property-relevant code, then expose loop-dependent violations."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import analysis as an
from .agent import GateVerdict, SemanticTask, StageLog, gate, handler
from .engine import DomainConfig, ResourceBudget, VerificationReport, uncovered_blocks, verify
from .minic import ast as A
from .minic.index import ProjectIndex
from .minic.printer import function_str
from .proof import UnitProof, parse_harness, scope_functions

STAGE = "bounds"
DOUBLING_CAP = 64


@dataclass(frozen=True)
class CoverageGap:
    file: str
    start: int
    end: int
    function: str
    cause: str = "unclassified"
    evidence: str = ""

    @property
    def block(self) -> tuple:
        return (self.file, self.start, self.end)


def uncovered_property_blocks(report: VerificationReport) -> list:
    """Uncovered blocks holding at least one property check, by file then line."""
    out = []
    for b in uncovered_blocks(report):
        if any(c.file == b.file and b.start <= c.line <= b.end for c in report.checks):
            out.append(CoverageGap(b.file, b.start, b.end, b.function))
    return sorted(out, key=lambda g: (g.file, g.start))


def _configs(proof: UnitProof, index: ProjectIndex) -> dict:
    cfg = {name: d.default for name, d in index.configs.items()}
    cfg.update(proof.env.config_map)
    return cfg


def blocking_loop(gap: CoverageGap, fn: A.FunctionDef, saturated) -> object:
    """Saturated loop of the gap's function that contains the gap or ends before it."""
    best = None
    for lp in fn.loops:
        if lp.id not in saturated:
            continue
        inside = lp.header_line < gap.start <= lp.end_line
        before = lp.end_line < gap.start
        if (inside or before) and (best is None or lp.header_line > best.header_line):
            best = lp
    return best


def _modeled_out_params(fn: A.FunctionDef, line: int, proof: UnitProof, index: ProjectIndex) -> list:
    """(callee, param, argument name) for modeled calls above ``line`` taking a local by pointer."""
    models = proof.env.models
    out = []
    for call in A.calls_in(fn.body):
        if call.name not in models or call.line >= line:
            continue
        sig = index.signature(call.name)
        for p, arg in zip(sig.params, call.args):
            if not p.ty.ptr:
                continue
            base = arg.target if isinstance(arg, A.AddrOf) else arg
            if isinstance(base, A.Name):
                out.append((call.name, p.name, base.id))
    return out


def classify_gap(gap: CoverageGap, proof: UnitProof, report: VerificationReport,
                 index: ProjectIndex) -> tuple:
    """Blocking factor of a gap as (cause, evidence)."""
    fn = scope_functions(proof, index)[gap.function]
    guards = an.enclosing_guards(fn, gap.start)
    configs = _configs(proof, index)
    for _, cond in reversed(guards):
        named = sorted(an.names_in(cond) & set(configs))
        if named:
            return "configuration-dependent", f"guard mentions config {', '.join(named)}"
    lp = blocking_loop(gap, fn, report.saturated_loops)
    if lp is not None:
        return "loop-dependent", f"block follows saturated loop {lp.id}"
    guard_names = set()
    for _, cond in guards:
        guard_names |= an.names_in(cond)
    for callee, param, arg in _modeled_out_params(fn, gap.start, proof, index):
        if arg in guard_names:
            return ("external-function-dependent",
                    f"guard reads {arg}, written through {callee}({param})")
    return "unclassified", "no rule matched"


def needed_iterations(fn: A.FunctionDef, lp, configs: dict):
    """Iterations a counting loop performs before its guard fails, if statically evident."""
    loop = an.loop_node(fn, lp.id)
    if lp.induction_hint is None or loop is None or loop.cond is None:
        return None
    var, start, stride = lp.induction_hint
    if start is None:
        start = an.loop_start(fn, loop, var)
    cond = loop.cond
    if start is None or stride is None or stride <= 0 or not isinstance(cond, A.Binary):
        return None
    limit = an.constant_value(cond.right, configs)
    if limit is None or cond.op not in ("<", "<="):
        return None
    if cond.op == "<":
        n = math.ceil((limit - start) / stride)
    else:
        n = (limit - start) // stride + 1
    return max(n, 0)


def _object_min_size(base: A.Expr, fn, proof: UnitProof, index: ProjectIndex):
    """Smallest element count the object behind ``base`` can have in the proof's context."""
    if not isinstance(base, A.Name):
        return None
    name = base.id
    d = an.local_decl(fn, name)
    if d is None and name in index.globals and not any(p.name == name for p in fn.params):
        d = index.globals[name]
    if d is not None and d.array_len is not None:
        return d.array_len
    if fn.name == proof.scope.entry:
        for pos, p in enumerate(fn.params):
            if p.name == name and p.ty.ptr:
                sizes = an.context_array_sizes(index, fn.name, pos)
                if sizes:
                    return min(sizes)
                spec = dict(proof.env.input_model).get(name)
                if spec is not None and spec.size_symbol:
                    hfn = parse_harness(proof.harness)
                    return an.harness_lower_bound(hfn, spec.size_symbol, proof.env.preconditions)
    if d is not None and isinstance(d.init, A.Call) and d.init.name == "malloc" and d.init.args:
        size = d.init.args[0]
        width = A.WIDTH[d.ty.base]
        per = 1
        if isinstance(size, A.Binary) and size.op == "*" and isinstance(size.right, A.IntLit):
            size, per = size.left, size.right.value
        if isinstance(size, A.IntLit):
            return size.value * per // width
        if isinstance(size, A.Name):
            lo = an.assume_lower_bound(fn, size.id)
            if lo is not None:
                return lo * per // width
    return None


def _index_offset(expr: A.Expr, var: str):
    if isinstance(expr, A.Cast):
        expr = expr.expr
    if isinstance(expr, A.Name) and expr.id == var:
        return 0
    if isinstance(expr, A.Binary) and expr.op in ("+", "-") and isinstance(expr.left, A.Name) \
            and expr.left.id == var and isinstance(expr.right, A.IntLit):
        return expr.right.value if expr.op == "+" else -expr.right.value
    return None


def min_bound_to_violate(loop_id: str, proof: UnitProof, index: ProjectIndex):
    """Smallest bound letting the induction variable index past the accessed object, or None."""
    fn, lp = index.loop_table()[loop_id]
    fn = scope_functions(proof, index).get(fn.name, fn)
    loop = an.loop_node(fn, loop_id)
    if lp.induction_hint is None or loop is None:
        return None
    var, start, stride = lp.induction_hint
    if start is None:
        start = an.loop_start(fn, loop, var)
    if start is None or not stride or stride <= 0:
        return None
    best = None
    for s in A.iter_stmts(fn.body):
        if s.line <= lp.header_line and s is not loop:
            continue
        exprs = A.stmt_exprs(s)
        if s is loop:
            exprs = []
        for e in (x for top in exprs for x in A.iter_expr(top)):
            if not isinstance(e, A.Index):
                continue
            off = _index_offset(e.index, var)
            if off is None:
                continue
            m = _object_min_size(e.base, fn, proof, index)
            if m is None:
                continue
            bound = max(1, math.ceil((m - off - start) / stride) + 1)
            best = bound if best is None else min(best, bound)
    return best


@dataclass
class BoundOutcome:
    proof: UnitProof
    report: VerificationReport
    applied: bool
    reason: str


def apply_bound(loop_id: str, bound: int, proof: UnitProof, report: VerificationReport,
                index: ProjectIndex, budget: ResourceBudget, domains: DomainConfig,
                exposure: bool = True, goal=None) -> BoundOutcome:
    """Provisionally raise one loop bound and keep it only if the gate accepts."""
    current = proof.bounds.get(loop_id)
    if bound < current:
        raise ValueError(f"bound {bound} below current bound {current} for {loop_id}")
    if bound == current:
        return BoundOutcome(proof, report, True, "no-op")
    candidate = replace(proof, bounds=proof.bounds.with_bound(loop_id, bound))
    rep = verify(candidate, index, budget, domains, witnesses=False)
    if rep.status == "inconclusive-budget":
        return BoundOutcome(proof, report, False, "budget exceeded")
    goal_met = True if goal is None else goal(rep)
    verdict = gate(candidate, report, rep, index, goal_met, exposure=exposure)
    if not verdict.accepted:
        return BoundOutcome(proof, report, False, verdict.reason)
    return BoundOutcome(candidate, rep, True, "ok")


@dataclass
class BoundStageResult:
    proof: UnitProof
    report: VerificationReport
    gaps: list = field(default_factory=list)  # CoverageGap with cause
    unclassified: list = field(default_factory=list)
    unapplied: list = field(default_factory=list)  # (loop id, bound, reason)


def _covers(gap: CoverageGap):
    return lambda rep: gap.start in rep.covered_lines.get(gap.file, ())


def run_bound_stage(index: ProjectIndex, proof: UnitProof, report: VerificationReport,
                    budget: ResourceBudget, domains: DomainConfig = None, resolver=None,
                    slog: StageLog = None) -> BoundStageResult:
    from .agent import RuleResolver

    domains = domains or DomainConfig()
    resolver = resolver or RuleResolver()
    slog = slog if slog is not None else StageLog()
    res = BoundStageResult(proof, report)

    # Step 1: cover property-relevant blocks, textual order, one pass.
    for gap in uncovered_property_blocks(report):
        if gap.start in res.report.covered_lines.get(gap.file, ()):
            continue
        fn = scope_functions(res.proof, index)[gap.function]
        task = SemanticTask(
            "classify-coverage-gap",
            {"file": gap.file, "start": gap.start, "end": gap.end, "function": gap.function,
             "source": function_str(fn), "saturated_loops": sorted(res.report.saturated_loops),
             "configs": _configs(res.proof, index)},
            "Answer one of: " + ", ".join(
                ("loop-dependent", "configuration-dependent", "external-function-dependent",
                 "unclassified")) + ".",
            {"gap": gap, "proof": res.proof, "report": res.report, "index": index})
        prop = resolver.resolve(task)
        slog.proposal(STAGE, prop, block=list(gap.block))
        cause = prop.result
        gap = replace(gap, cause=cause, evidence=prop.rationale)
        res.gaps.append(gap)
        if cause == "unclassified":
            res.unclassified.append(gap)
            slog.note(STAGE, "unclassified gap skipped", block=list(gap.block))
            continue
        for edit, candidate in _repairs(gap, cause, res, index, resolver, slog):
            rep = verify(candidate, index, budget, domains, witnesses=False)
            verdict = gate(candidate, res.report, rep, index, _covers(gap)(rep))
            gid = slog.gate(STAGE, "repair-gap", verdict, block=list(gap.block), edit=edit)
            if verdict.accepted:
                slog.mutation(STAGE, gid, edit, cause=cause)
                res.proof, res.report = candidate, rep
                break

    # Step 2: expose loop-dependent violations behind saturated loops.
    for loop_id in sorted(res.report.saturated_loops):
        task = SemanticTask(
            "estimate-loop-bound",
            {"loop": loop_id, "mode": "expose", "current": res.proof.bounds.get(loop_id),
             "source": function_str(index.loop_table()[loop_id][0])},
            "Return the smallest bound at which a loop-dependent access can leave its object, "
            "or null.",
            {"proof": res.proof, "index": index, "loop": loop_id, "mode": "expose"})
        prop = resolver.resolve(task)
        slog.proposal(STAGE, prop, loop=loop_id)
        bound = prop.result
        if bound is None or bound <= res.proof.bounds.get(loop_id):
            continue
        out = apply_bound(loop_id, bound, res.proof, res.report, index, budget, domains)
        gid = slog.gate(STAGE, "apply-bound", GateVerdict(out.applied, out.reason),
                        loop=loop_id, bound=bound)
        if out.applied:
            slog.mutation(STAGE, gid, f"bound {loop_id} = {bound}")
            res.proof, res.report = out.proof, out.report
        else:
            res.unapplied.append((loop_id, bound, out.reason))
            slog.note(STAGE, "recommended bound not applied", loop=loop_id, bound=bound,
                      reason=out.reason)
    return res


def _repairs(gap, cause, res, index, resolver, slog):
    """Candidate single-edit proofs for one gap, most specific first."""
    proof = res.proof
    fn = scope_functions(proof, index)[gap.function]
    if cause == "configuration-dependent":
        configs = _configs(proof, index)
        names = set()
        for _, cond in an.enclosing_guards(fn, gap.start):
            names |= an.names_in(cond) & set(configs)
        for name in sorted(names):
            decl = index.configs[name]
            for value in sorted(decl.candidates or ()):
                if value != configs[name]:
                    yield (f"config {name} = {value}",
                           replace(proof, env=proof.env.with_config(name, value)))
    elif cause == "loop-dependent":
        lp = blocking_loop(gap, fn, res.report.saturated_loops)
        task = SemanticTask(
            "estimate-loop-bound",
            {"loop": lp.id, "mode": "cover", "current": proof.bounds.get(lp.id),
             "block": list(gap.block), "source": function_str(fn)},
            "Return the number of iterations needed to reach the block plus one, or null.",
            {"proof": proof, "index": index, "loop": lp.id, "mode": "cover"})
        prop = resolver.resolve(task)
        slog.proposal(STAGE, prop, loop=lp.id)
        current = proof.bounds.get(lp.id)
        tried = set()
        if prop.result is not None and prop.result > current:
            tried.add(prop.result)
            yield (f"bound {lp.id} = {prop.result}",
                   replace(proof, bounds=proof.bounds.with_bound(lp.id, prop.result)))
        b = current * 2
        while b <= DOUBLING_CAP:
            if b not in tried:
                yield (f"bound {lp.id} = {b}",
                       replace(proof, bounds=proof.bounds.with_bound(lp.id, b)))
            b *= 2
    elif cause == "external-function-dependent":
        guard_names = set()
        for _, cond in an.enclosing_guards(fn, gap.start):
            guard_names |= an.names_in(cond)
        for callee, param, arg in _modeled_out_params(fn, gap.start, proof, index):
            if arg not in guard_names:
                continue
            model = proof.env.model(callee)
            if param in model.side_effects:
                continue
            m2 = replace(model, side_effects=tuple(sorted(set(model.side_effects) | {param})))
            yield (f"model {callee} havoc {param}", replace(proof, env=proof.env.with_model(m2)))


@handler("classify-coverage-gap")
def _resolve_gap(task):
    c = task.context
    return classify_gap(c["gap"], c["proof"], c["report"], c["index"])


@handler("estimate-loop-bound")
def _resolve_bound(task):
    c = task.context
    proof, index, loop_id = c["proof"], c["index"], c["loop"]
    if c["mode"] == "expose":
        b = min_bound_to_violate(loop_id, proof, index)
        return b, "induction start, stride and smallest accessed object size"
    fn, lp = index.loop_table()[loop_id]
    fn = scope_functions(proof, index).get(fn.name, fn)
    n = needed_iterations(fn, lp, _configs(proof, index))
    if n is None:
        return None, "no counting guard recognized"
    return n + 1, f"guard admits {n} iterations"
