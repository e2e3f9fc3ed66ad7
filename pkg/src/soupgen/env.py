"""Stage 3: infer preconditions from counterexamples and check them against real contexts.

A violation found under the synthesized environment is either an artifact of
an environment that is too permissive, or a real bug. For each violation the
stage proposes a precondition that suppresses it, then asks the code that
actually calls the entry (and the code behind each modeled function) whether
it can break that precondition. A precondition the context honours is kept.
One the context breaks is weakened if possible, and if the context can also
drive the violation, the violation is reported as a memory-safety error.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from . import analysis as an
from .agent import GateVerdict, RuleResolver, SemanticTask, StageLog, gate, handler
from .engine import DomainConfig, ResourceBudget, VerificationReport, Witness, build_program, explore, verify
from .engine.program import ProgramError, holds
from .engine.semantics import PropertyCheck, domain_values
from .harness import HarnessError, model_external_callees, synthesize_input_model
from .minic import ast as A
from .minic.index import INTRINSICS, ProjectIndex, callsites_of
from .minic.printer import expr_str
from .proof import (
    EnvironmentModel, LoopBoundMap, PreconditionTerm, ProofError, UnitProof, VerificationScope, assemble,
    harness_symbols, parse_harness, ret_symbol, scope_functions,
)

STAGE = "env"
PATH_DEPTH_CAP = 8
WEAKEN_CAP = 4
BIT_WIDTHS = (8, 16, 32, 64)
RET_LOCAL = "soupgen_ret"


# --- data ------------------------------------------------------------------


@dataclass
class Context:
    """Values the real code can give to environment symbols."""

    sites: list = field(default_factory=list)  # {"site": ..., "guards": [...]}
    pins: dict = field(default_factory=dict)  # symbol -> set of values
    unknown: list = field(default_factory=list)  # sites that could not be enumerated

    def describe(self) -> dict:
        return {"sites": self.sites,
                "pins": {s: [min(v), max(v)] for s, v in sorted(self.pins.items()) if v},
                "unknown": self.unknown}


@dataclass
class MemorySafetyError:
    property: PropertyCheck
    context: dict
    rejected_precondition: tuple  # PreconditionTerm the context breaks (empty if escalated)
    retained_precondition: tuple
    witness: Witness
    witness_preconditions: tuple  # full precondition set of the run that produced the witness

    def to_dict(self) -> dict:
        c = self.property
        return {
            "property": {"id": c.id, "kind": c.kind, "file": c.file, "line": c.line,
                         "function": c.function},
            "violating_context": self.context,
            "rejected_precondition": [t.manifest() for t in self.rejected_precondition],
            "retained_precondition": [t.manifest() for t in self.retained_precondition],
            "witness": self.witness.to_dict(),
            "witness_preconditions": [t.manifest() for t in self.witness_preconditions],
        }


@dataclass
class Validation:
    outcome: int  # 1 weakened, 2 error, 3 implied
    kept: tuple  # terms left in the proof for this violation
    violating: tuple = ()  # terms the context breaks
    error: MemorySafetyError = None
    report: VerificationReport = None


@dataclass
class EnvStageResult:
    proof: UnitProof
    report: VerificationReport
    errors: list = field(default_factory=list)
    suppressed: list = field(default_factory=list)  # dicts: property, preconditions, outcome


# --- helpers -----------------------------------------------------------------


def with_preconditions(env: EnvironmentModel, terms) -> EnvironmentModel:
    """``env`` with its preconditions replaced by ``terms``."""
    bare = env
    for t in env.all_preconditions():
        bare = bare.remove_precondition(t)
    return bare.add_preconditions(list(terms))


def _with_terms(proof: UnitProof, terms) -> UnitProof:
    return replace(proof, env=with_preconditions(proof.env, terms))


def parse_violation_report(report: VerificationReport) -> list:
    """(check, witness) pairs ordered by file, line and kind."""
    return sorted(report.violations, key=lambda cw: (cw[0].file, cw[0].line, cw[0].kind, cw[0].id))


def _node_at(fn: A.FunctionDef, line: int, col: int) -> list:
    return [e for e in A.iter_all_exprs(fn.body) if e.line == line and e.col == col]


def _strip(e):
    while isinstance(e, A.Cast):
        e = e.expr
    return e


class _Frame:
    """Symbol lookup for expressions of the entry function."""

    def __init__(self, proof: UnitProof, index: ProjectIndex):
        self.proof = proof
        self.index = index
        self.fns = scope_functions(proof, index)
        self.entry = self.fns[proof.scope.entry]
        self.models = proof.env.models
        self.specs = dict(proof.env.input_model)

    def symbol(self, fn, e):
        e = _strip(e)
        if isinstance(e, A.Name):
            return an.symbol_of(fn, e.id, self.entry, self.models)
        if isinstance(e, A.Call) and e.name in self.models:
            return ret_symbol(e.name)
        return None

    def size_symbol(self, fn, base):
        """Element-count symbol of an entry pointer parameter, if ``base`` is one."""
        base = _strip(base)
        if fn is self.entry and isinstance(base, A.Name):
            spec = self.specs.get(base.id)
            if spec is not None and spec.kind == "alloc" and spec.size_symbol:
                return spec.size_symbol
        return None

    def pointer_symbol(self, fn, base):
        base = _strip(base)
        if not isinstance(base, A.Name):
            return None
        if fn is self.entry and base.id in self.specs:
            return base.id
        d = an.local_decl(fn, base.id)
        if d is not None and isinstance(_strip(d.init), A.Call) and _strip(d.init).name in self.models:
            return ret_symbol(_strip(d.init).name)
        return None

    def context_size(self, fn, base):
        base = _strip(base)
        if fn is self.entry and isinstance(base, A.Name):
            for pos, p in enumerate(fn.params):
                if p.name == base.id and p.ty.ptr:
                    sizes = an.context_array_sizes(self.index, fn.name, pos)
                    return min(sizes) if sizes else None
        return None

    def array_len(self, fn, base):
        base = _strip(base)
        if not isinstance(base, A.Name):
            return None
        d = an.local_decl(fn, base.id)
        if d is None and not any(p.name == base.id for p in fn.params):
            d = self.index.globals.get(base.id)
        return d.array_len if d is not None else None


def _enclosing_loop(fn: A.FunctionDef, line: int, var: str):
    best = None
    for lp in fn.loops:
        if lp.header_line <= line <= lp.end_line and lp.induction_hint and lp.induction_hint[0] == var:
            if best is None or lp.header_line > best.header_line:
                best = lp
    return best


# --- inference ---------------------------------------------------------------


def slice_precondition(q: PropertyCheck, proof: UnitProof, index: ProjectIndex):
    """Rule (a): derive terms from the violated access and the guards feeding it."""
    fr = _Frame(proof, index)
    fn = fr.fns.get(q.function)
    if fn is None:
        return None
    for e in _node_at(fn, q.line, q.col):
        terms = _slice_node(q.kind, e, fn, fr)
        if terms:
            return sorted(set(terms))
    return None


def _slice_node(kind, e, fn, fr: _Frame):
    if kind == "null-deref":
        ptr = e.base if isinstance(e, A.Index) else e.ptr if isinstance(e, A.Deref) else None
        sym = fr.pointer_symbol(fn, ptr) if ptr is not None else None
        return [PreconditionTerm.not_null(sym)] if sym else None
    if kind == "div-by-zero" and isinstance(e, A.Binary) and e.op in ("/", "%"):
        sym = fr.symbol(fn, e.right)
        return [PreconditionTerm.var_const(sym, "!=", 0)] if sym else None
    if not isinstance(e, A.Index) or kind not in ("oob-pointer-deref", "array-upper-bound",
                                                  "array-lower-bound"):
        return None
    idx = _strip(e.index)
    off = 0
    if isinstance(idx, A.Binary) and idx.op in ("+", "-") and isinstance(idx.right, A.IntLit):
        off = idx.right.value if idx.op == "+" else -idx.right.value
        idx = _strip(idx.left)
    if kind == "array-lower-bound":
        sym = fr.symbol(fn, idx)
        return [PreconditionTerm.var_const(sym, ">=", -off)] if sym else None
    size_sym = fr.size_symbol(fn, e.base)
    fixed = fr.array_len(fn, e.base)
    k = fixed if fixed is not None else fr.context_size(fn, e.base)

    # The largest index the access reaches, as (symbol or None, constant, inclusive).
    top = None
    if isinstance(idx, A.Name):
        lp = _enclosing_loop(fn, e.line, idx.id)
        loop = an.loop_node(fn, lp.id) if lp is not None else None
        cond = loop.cond if loop is not None else None
        if isinstance(cond, A.Binary) and cond.op in ("<", "<=") and isinstance(cond.left, A.Name) \
                and cond.left.id == idx.id:
            inclusive = cond.op == "<="
            c = an.constant_value(cond.right, {})
            if c is not None:
                top = (None, c if inclusive else c - 1, True)
            else:
                bsym = fr.symbol(fn, cond.right)
                if bsym is not None:
                    top = (bsym, 0, inclusive)
    if top is None:
        sym = fr.symbol(fn, idx)
        if sym is None:
            return None
        top = (sym, 0, True)
    sym, c, inclusive = top
    if sym is None:
        need = c + off + 1  # elements the object must hold
        return [PreconditionTerm.var_const(size_sym, ">=", need)] if size_sym else None
    terms = []
    if k is not None:
        limit = k - off
        if size_sym is not None and fixed is None:
            terms.append(PreconditionTerm.var_const(size_sym, ">=", k))
        terms.append(PreconditionTerm.var_const(sym, "<" if inclusive else "<=", limit))
        return terms
    if size_sym is not None and off == 0:
        return [PreconditionTerm.var_var(sym, "<" if inclusive else "<=", size_sym)]
    return None


def grammar_symbols(proof: UnitProof) -> tuple:
    """(scalar symbols, pointer symbols) available to preconditions."""
    hfn = parse_harness(proof.harness)
    scalars, pointers = [], []
    for name, ty in harness_symbols(hfn).items():
        (pointers if ty.ptr else scalars).append(name)
    for m in proof.env.function_models:
        spec = m.return_spec
        if spec.kind == "nondet":
            scalars.append(ret_symbol(m.name))
        elif spec.kind in ("alloc", "alloc-fixed"):
            pointers.append(ret_symbol(m.name))
    return sorted(scalars), sorted(pointers)


def grammar_constants(proof: UnitProof, index: ProjectIndex) -> list:
    consts = {0, 1, *BIT_WIDTHS}
    for fn in scope_functions(proof, index).values():
        for s in A.iter_stmts(fn.body):
            if isinstance(s, A.VarDecl) and s.array_len is not None:
                consts.add(s.array_len)
        for pos, p in enumerate(fn.params):
            if p.ty.ptr and fn.name == proof.scope.entry:
                consts.update(an.context_array_sizes(index, fn.name, pos))
    for g in index.globals.values():
        if g.array_len is not None:
            consts.add(g.array_len)
    hfn = parse_harness(proof.harness)
    for s in hfn.body.stmts:
        if isinstance(s, A.Assume):
            consts.update(e.value for e in A.iter_expr(s.cond) if isinstance(e, A.IntLit))
    return sorted(consts)


def grammar_candidates(proof: UnitProof, index: ProjectIndex) -> list:
    scalars, pointers = grammar_symbols(proof)
    out = [PreconditionTerm.not_null(p) for p in pointers]
    for x in scalars:
        for c in grammar_constants(proof, index):
            for rel in ("<", "<=", ">", ">=", "!="):
                out.append(PreconditionTerm.var_const(x, rel, c))
    for x, y in itertools.permutations(scalars, 2):
        for rel in ("<", "<="):
            out.append(PreconditionTerm.var_var(x, rel, y))
    return out


def witness_values(proof: UnitProof, witness: Witness) -> dict:
    """Harness scalar symbol -> value chosen on the witness path."""
    if witness is None:
        return {}
    out = {}
    for st in parse_harness(proof.harness).body.stmts:
        if not (isinstance(st, A.VarDecl) and isinstance(st.init, A.Call)
                and st.init.name.startswith("nondet_") and not st.ty.ptr):
            continue
        prefix = f"nondet@<harness>:{st.init.line}:"
        hits = [v for k, v in witness.nondet_assignment.items() if k.startswith(prefix)]
        if len(hits) == 1:
            out[st.name] = hits[0]
    return out


def _reachable_values(hfn: A.FunctionDef, name: str, ty, domains) -> tuple:
    """Domain values of a harness symbol that survive its ``assume(name op c)`` lines."""
    vals = domain_values(ty, domains)
    for st in hfn.body.stmts:
        c = st.cond if isinstance(st, A.Assume) else None
        if (isinstance(c, A.Binary) and isinstance(c.left, A.Name) and c.left.id == name
                and isinstance(c.right, A.IntLit) and c.op in ("<", "<=", ">", ">=", "!=", "==")):
            t = PreconditionTerm.var_const(name, c.op, c.right.value)
            vals = tuple(v for v in vals if holds(t, {name: v}))
    return vals


def _pruned_candidates(q, proof, report, index, domains):
    """Grammar terms that can possibly suppress ``q``.

    A term the witness satisfies keeps the witness path, so it cannot suppress
    the violation. A term admitting none of a symbol's reachable values empties
    the proof. Terms over one symbol admitting the same reachable values give
    identical verification results, so only the first of each group is kept.
    """
    chosen = witness_values(proof, report.witness_for(q.id))
    hfn = parse_harness(proof.harness)
    types = harness_symbols(hfn)
    assumed = {t for t in proof.env.all_preconditions()}
    seen = set()
    for t in grammar_candidates(proof, index):
        if t in assumed:
            continue
        if chosen and all(s in chosen for s in t.subjects) and holds(t, chosen):
            continue
        if t.category == "pointer-not-null" and _harness_assumes_not_null(hfn, t.subjects[0]):
            continue
        if t.category == "variable-constant" and t.subjects[0] in types:
            x = t.subjects[0]
            admitted = frozenset(v for v in _reachable_values(hfn, x, types[x], domains)
                                 if holds(t, {x: v}))
            if not admitted or (x, admitted) in seen:
                continue
            seen.add((x, admitted))
        yield t


def _harness_assumes_not_null(hfn: A.FunctionDef, name: str) -> bool:
    return any(isinstance(st, A.Assume) and isinstance(st.cond, A.Binary) and st.cond.op == "!="
               and isinstance(st.cond.left, A.Name) and st.cond.left.id == name
               and isinstance(st.cond.right, A.NullLit)
               for st in hfn.body.stmts)


def _suppresses(q, terms, proof, report, index, budget, domains):
    """(verdict, report) for adding ``terms`` to the proof while targeting ``q``."""
    existing = list(proof.env.all_preconditions())
    cand = _with_terms(proof, existing + [t for t in terms if t not in existing])
    rep = verify(cand, index, budget, domains, witnesses=False)
    verdict = gate(cand, report, rep, index, q.id not in rep.violated_ids)
    return verdict, rep


def infer_precondition(q: PropertyCheck, proof: UnitProof, report: VerificationReport,
                       index: ProjectIndex, budget: ResourceBudget, domains: DomainConfig,
                       slog: StageLog = None):
    """Suppressing terms for ``q`` (slice first, grammar second), or None."""
    sliced = slice_precondition(q, proof, index)
    if sliced:
        verdict, _ = _suppresses(q, sliced, proof, report, index, budget, domains)
        if slog is not None:
            slog.gate(STAGE, "infer-precondition", verdict, property=q.id,
                      candidate=[str(t) for t in sliced], rule="slice")
        if verdict.accepted:
            return sliced
    best = None
    for t in _pruned_candidates(q, proof, report, index, domains):
        if t in proof.env.all_preconditions():
            continue
        verdict, rep = _suppresses(q, [t], proof, report, index, budget, domains)
        if verdict.accepted and (best is None or rep.feasible_paths > best[1]):
            best = (t, rep.feasible_paths)
    if slog is not None:
        slog.gate(STAGE, "infer-precondition", GateVerdict(best is not None, "ok" if best else
                                                            "no suppressing candidate"),
                  property=q.id, candidate=[str(best[0])] if best else [], rule="grammar")
    return [best[0]] if best else None


# --- contexts ----------------------------------------------------------------


def _reachable_without(index, root: A.FunctionDef, stop: str) -> dict:
    out = {root.name: root}
    work = [root]
    while work:
        fn = work.pop()
        for call in A.calls_in(fn.body):
            if call.name in INTRINSICS or call.name in out or call.name == stop:
                continue
            defs = [d for d in index.by_name(call.name) if d.file == root.file]
            if defs:
                out[call.name] = defs[0]
                work.append(defs[0])
    return out


def _context_proof(index, root: A.FunctionDef, stop: str, harness: str, alloc_cap: int):
    fns = _reachable_without(index, root, stop)
    models = model_external_callees(list(fns.values()), index, alloc_cap)
    scope = VerificationScope(root.name, frozenset(fns), frozenset({root.file}), 0)
    env = EnvironmentModel((), tuple(models[k] for k in sorted(models)))
    return assemble(scope, LoopBoundMap.of({}, 1), env, harness)


def path_constraints(fn: A.FunctionDef, line: int) -> list:
    """Branch guards dominating ``line`` in ``fn``, outermost first, capped."""
    return [expr_str(c) for _, c in an.enclosing_guards(fn, line)][:PATH_DEPTH_CAP]


def collect_context(proof: UnitProof, index: ProjectIndex, budget: ResourceBudget,
                    domains: DomainConfig) -> Context:
    """Pins from every caller of the entry and every real implementation of a modeled function."""
    ctx = Context()
    entry = scope_functions(proof, index)[proof.scope.entry]
    specs = dict(proof.env.input_model)
    sites = callsites_of(index, entry.name)
    seen = set()
    for (cfile, cname), (_, line, _col) in sites:
        if (cfile, cname) in seen or cname == entry.name:
            continue
        seen.add((cfile, cname))
        caller = index.function(cname, cfile)
        ctx.sites.append({"site": f"{cname}@{cfile}:{line}", "guards": path_constraints(caller, line)})
        try:
            src, _ = synthesize_input_model(caller, domains.alloc_cap)
            cproof = _context_proof(index, caller, entry.name, src, domains.alloc_cap)
            prog = build_program(cproof, index)
        except (HarnessError, ProgramError, ProofError) as exc:  # context outside supported shapes
            ctx.unknown.append({"site": f"{cname}@{cfile}:{line}", "reason": str(exc)})
            continue
        observed = []

        def on_path(ex, end, observed=observed):
            observed.extend(args for name, args in ex.observed if name == entry.name)

        if explore(prog, budget, domains, on_path, observe={entry.name}):
            ctx.unknown.append({"site": f"{cname}@{cfile}:{line}", "reason": "budget exceeded"})
            continue
        for args in observed:
            for p, v in zip(entry.params, args):
                if v is None:
                    continue
                sym = specs[p.name].size_symbol if p.ty.ptr else p.name
                if sym:
                    ctx.pins.setdefault(sym, set()).add(v)
    for m in proof.env.function_models:
        defs = index.by_name(m.name)
        if not defs or m.return_spec.kind != "nondet":
            continue
        impl = defs[0]
        ctx.sites.append({"site": f"impl:{m.name}@{impl.file}", "guards": []})
        try:
            src, _ = synthesize_input_model(impl, domains.alloc_cap)
            call = f"{m.name}({', '.join(p.name for p in impl.params)});"
            src = src.replace(call, f"{impl.return_type} {RET_LOCAL} = {call}")
            iproof = _context_proof(index, impl, "", src, domains.alloc_cap)
            prog = build_program(iproof, index)
        except (HarnessError, ProgramError, ProofError) as exc:
            ctx.unknown.append({"site": f"impl:{m.name}", "reason": str(exc)})
            continue
        values = set()

        def on_ret(ex, end, values=values):
            if end == "complete" and RET_LOCAL in ex.syms:
                values.add(ex.syms[RET_LOCAL])

        if explore(prog, budget, domains, on_ret):
            ctx.unknown.append({"site": f"impl:{m.name}", "reason": "budget exceeded"})
            continue
        if values:
            ctx.pins.setdefault(ret_symbol(m.name), set()).update(values)
    return ctx


def context_violates(term: PreconditionTerm, pins: dict) -> bool:
    """True if some pinned combination of the term's subjects breaks it."""
    if not all(s in pins and pins[s] for s in term.subjects):
        return False
    for combo in itertools.product(*(sorted(pins[s]) for s in term.subjects)):
        if not holds(term, dict(zip(term.subjects, combo))):
            return True
    return False


def hull_terms(pins: dict) -> list:
    out = []
    for s in sorted(pins):
        if pins[s]:
            out.append(PreconditionTerm.var_const(s, ">=", min(pins[s])))
            out.append(PreconditionTerm.var_const(s, "<=", max(pins[s])))
    return out


def weaken_term(term: PreconditionTerm, pins: dict):
    """Chain of relaxations ending in a term the pins satisfy, or None."""
    chain = []
    t = term
    for _ in range(WEAKEN_CAP):
        if not context_violates(t, pins):
            return chain or None
        nxt = _relax(t, pins)
        if nxt is None or nxt == t:
            return None
        chain.append(nxt)
        t = nxt
    return chain if chain and not context_violates(chain[-1], pins) else None


def _relax(t: PreconditionTerm, pins: dict):
    if t.category == "variable-variable":
        return PreconditionTerm.var_var(t.subjects[0], "<=", t.subjects[1]) if t.relation == "<" else None
    if t.category != "variable-constant":
        return None
    x, c = t.subjects[0], t.constant
    vals = pins[x]
    if t.relation == "<":
        return PreconditionTerm.var_const(x, "<=", c)
    if t.relation == "<=":
        return PreconditionTerm.var_const(x, "<=", max(vals))
    if t.relation == ">":
        return PreconditionTerm.var_const(x, ">=", c)
    if t.relation == ">=":
        return PreconditionTerm.var_const(x, ">=", min(vals))
    return None


def weaken_precondition(terms, pins: dict):
    """Replace each context-broken term by its weakest needed relaxation; None if impossible."""
    out = []
    for t in terms:
        if not context_violates(t, pins):
            out.append(t)
            continue
        chain = weaken_term(t, pins)
        if chain is None:
            return None
        out.append(chain[-1])
    return sorted(set(out))


def validate_precondition(q: PropertyCheck, terms, proof: UnitProof, report: VerificationReport,
                          index: ProjectIndex, budget: ResourceBudget, domains: DomainConfig,
                          ctx: Context, resolver=None, slog: StageLog = None) -> Validation:
    """Classify ``terms`` against the context: implied (3), weakened (1) or a real error (2)."""
    violating = tuple(t for t in terms if context_violates(t, ctx.pins))
    if not violating:
        return Validation(3, tuple(terms))
    base = [t for t in proof.env.all_preconditions() if t not in terms]
    task = SemanticTask(
        "weaken-precondition",
        {"property": q.id, "precondition": [t.manifest() for t in terms],
         "context": ctx.describe()},
        "Relax only the terms the context breaks, by the smallest step admitting every context "
        "value; the result must still suppress the property.",
        {"terms": terms, "pins": ctx.pins})
    prop = (resolver or RuleResolver()).resolve(task)
    if slog is not None:
        slog.proposal(STAGE, prop, property=q.id)
    weakened = prop.result
    if weakened and any(context_violates(t, ctx.pins) for t in weakened):
        weakened = weaken_precondition(terms, ctx.pins)
    kept = tuple(terms)
    if weakened:
        cand = _with_terms(proof, base + list(weakened))
        rep = verify(cand, index, budget, domains, witnesses=False)
        verdict = gate(cand, report, rep, index, q.id not in rep.violated_ids)
        if slog is not None:
            slog.gate(STAGE, "weaken-precondition", verdict, property=q.id,
                      candidate=[str(t) for t in weakened])
        if verdict.accepted:
            return Validation(1, tuple(weakened), violating, report=rep)
        kept = tuple(weakened)
    # Does the context itself drive the violation?  Only the broken subjects are pinned;
    # other pins may lie outside the enumerated domains and would empty the probe.
    symbols = {s for t in violating for s in t.subjects}
    hull = hull_terms({s: v for s, v in ctx.pins.items() if s in symbols})
    honoured = [t for t in terms if t not in violating]
    witness_terms = tuple(sorted(set(base) | set(honoured) | set(hull)))
    probe = _with_terms(proof, witness_terms)
    rep = verify(probe, index, budget, domains, witnesses=True)
    if q.id in rep.violated_ids:
        err = MemorySafetyError(q, ctx.describe(), violating, kept, rep.witness_for(q.id), witness_terms)
        return Validation(2, kept, violating, err, rep)
    # The context breaks the precondition but not the property: use the context bounds instead.
    repl = honoured + hull
    cand = _with_terms(proof, base + repl)
    rep2 = verify(cand, index, budget, domains, witnesses=False)
    if q.id not in rep2.violated_ids:
        return Validation(1, tuple(sorted(set(repl))), violating, report=rep2)
    return Validation(1, tuple(terms), violating, report=rep2)


# --- stage -------------------------------------------------------------------


def _escalate(q, witness, proof):
    return MemorySafetyError(q, {"sites": [], "pins": {}, "unknown": []}, (), (), witness,
                             tuple(proof.env.all_preconditions()))


def run_env_stage(index: ProjectIndex, proof: UnitProof, report: VerificationReport,
                  budget: ResourceBudget, domains: DomainConfig = None, resolver=None,
                  slog: StageLog = None) -> EnvStageResult:
    domains = domains or DomainConfig()
    resolver = resolver or RuleResolver()
    slog = slog if slog is not None else StageLog()
    current = verify(proof, index, budget, domains)
    res = EnvStageResult(proof, current)
    ctx = None
    handled: set = set()
    for _round in range(8):
        pending = [(q, w) for q, w in parse_violation_report(res.report) if q.id not in handled]
        if not pending:
            break
        for q, w in pending:
            handled.add(q.id)
            if q.id not in res.report.violated_ids:
                slog.note(STAGE, "already suppressed by earlier preconditions", property=q.id)
                continue
            w = res.report.witness_for(q.id) or w
            task = SemanticTask(
                "infer-precondition",
                {"property": {"id": q.id, "kind": q.kind, "file": q.file, "line": q.line},
                 "witness": w.to_dict(),
                 "symbols": list(grammar_symbols(res.proof)[0]),
                 "constants": grammar_constants(res.proof, index)},
                "Give the weakest preconditions over harness symbols or ret_of(f) that suppress "
                "the violation without reducing coverage or the number of checked properties.",
                {"q": q, "proof": res.proof, "report": res.report, "index": index,
                 "budget": budget, "domains": domains, "slog": slog})
            prop = resolver.resolve(task)
            slog.proposal(STAGE, prop, property=q.id)
            terms = prop.result
            if prop.source != "rule" and terms:
                verdict, _ = _suppresses(q, terms, res.proof, res.report, index, budget, domains)
                slog.gate(STAGE, "infer-precondition", verdict, property=q.id,
                          candidate=[str(t) for t in terms], rule="remote")
                if not verdict.accepted:
                    terms = infer_precondition(q, res.proof, res.report, index, budget, domains, slog)
            if not terms:
                err = _escalate(q, w, res.proof)
                res.errors.append(err)
                slog.note(STAGE, "no precondition survives; reported as an error", property=q.id)
                continue
            if ctx is None:
                ptask = SemanticTask(
                    "extract-path-constraints",
                    {"entry": res.proof.scope.entry, "cap": PATH_DEPTH_CAP},
                    "List the branch guards dominating each callsite of the entry.",
                    {"proof": res.proof, "index": index})
                slog.proposal(STAGE, resolver.resolve(ptask))
                ctx = collect_context(res.proof, index, budget, domains)
                slog.note(STAGE, "calling context", **ctx.describe())
            val = validate_precondition(q, terms, res.proof, res.report, index, budget, domains,
                                        ctx, resolver, slog)
            base = [t for t in res.proof.env.all_preconditions() if t not in val.kept]
            cand = _with_terms(res.proof, base + list(val.kept))
            rep = verify(cand, index, budget, domains)
            goal = val.outcome == 2 or q.id not in rep.violated_ids
            verdict = gate(cand, res.report, rep, index, goal, exposure=val.outcome == 2)
            gid = slog.gate(STAGE, "validate-precondition", verdict, property=q.id,
                            outcome=val.outcome, kept=[str(t) for t in val.kept],
                            rejected=[str(t) for t in val.violating])
            if not verdict.accepted:
                res.errors.append(_escalate(q, w, res.proof))
                continue
            slog.mutation(STAGE, gid, "preconditions " + ", ".join(str(t) for t in val.kept))
            res.proof, res.report = cand, rep
            if val.outcome == 2:
                res.errors.append(val.error)
            else:
                res.suppressed.append({"property": q.id, "file": q.file, "line": q.line,
                                       "kind": q.kind, "outcome": val.outcome,
                                       "preconditions": [t.manifest() for t in val.kept],
                                       "context": ctx.describe()})
    return res


@handler("infer-precondition")
def _resolve_infer(task):
    c = task.context
    terms = infer_precondition(c["q"], c["proof"], c["report"], c["index"], c["budget"],
                               c["domains"], c.get("slog"))
    return terms, "backward slice of the violated access, else weakest suppressing grammar term"


@handler("extract-path-constraints")
def _resolve_paths(task):
    c = task.context
    proof, index = c["proof"], c["index"]
    out = []
    for (cfile, cname), (_, line, _col) in callsites_of(index, proof.scope.entry):
        caller = index.function(cname, cfile)
        out.append(" && ".join(path_constraints(caller, line)) or "true")
    return out, "dominating branch guards per callsite"


@handler("weaken-precondition")
def _resolve_weaken(task):
    c = task.context
    return weaken_precondition(c["terms"], c["pins"]), "minimal relaxation admitting the context"
