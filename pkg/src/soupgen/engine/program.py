"""Everything an interpreter needs to execute a unit proof."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..minic import ast as A
from ..minic.index import ProjectIndex
from ..minic.parser import MiniCSyntaxError
from ..minic.typecheck import Checker
from ..proof import UnitProof, harness_symbols, parse_harness, ret_symbol, scope_functions
from .semantics import PropertyCheck, instrument

HARNESS_FILE = "<harness>"


class ProgramError(Exception):
    """The proof cannot be executed (diagnostic goes into an error report)."""


@dataclass
class Program:
    entry: str
    functions: dict  # name -> FunctionDef (in scope)
    harness: A.FunctionDef
    models: dict  # name -> FunctionModel
    model_sigs: dict  # name -> FunctionDef signature
    globals: list  # VarDecl
    configs: dict  # name -> value
    bounds: object  # LoopBoundMap
    checks: list  # PropertyCheck
    symbols: dict  # harness symbol -> type
    terms_by_symbol: dict = field(default_factory=dict)
    addr_taken: dict = field(default_factory=dict)  # function name -> set of names
    loops: dict = field(default_factory=dict)  # loop id -> (FunctionDef, LoopInfo)

    def __post_init__(self):
        self.check_by_key = {c.key: c for c in self.checks}
        self.check_by_id = {c.id: c for c in self.checks}

    def bound(self, loop_id: str) -> int:
        return self.bounds.get(loop_id)

    def all_functions(self) -> list:
        return [self.harness] + [self.functions[n] for n in sorted(self.functions)]


def _addr_taken(fn: A.FunctionDef) -> set:
    return {e.target.id for e in A.iter_all_exprs(fn.body)
            if isinstance(e, A.AddrOf) and isinstance(e.target, A.Name)}


def build_program(proof: UnitProof, index: ProjectIndex) -> Program:
    fns = scope_functions(proof, index)
    missing = sorted(set(proof.scope.functions) - set(fns))
    if missing:
        raise ProgramError(f"scope functions not defined: {', '.join(missing)}")
    models = proof.env.models
    model_sigs = {}
    for name in models:
        sig = index.signature(name)
        if sig is None:
            raise ProgramError(f"model for undeclared function {name!r}")
        pointers = {p.name for p in sig.params if p.ty.ptr}
        for h in models[name].side_effects:
            if h not in pointers:
                raise ProgramError(f"model {name}: havoc target {h!r} is not a pointer parameter")
        model_sigs[name] = sig
    try:
        harness = parse_harness(proof.harness)
    except MiniCSyntaxError as exc:
        raise ProgramError(f"harness: {exc}") from exc
    harness.file = HARNESS_FILE

    def sig(name):
        return fns.get(name) or model_sigs.get(name)

    errors = Checker(sig, index.globals, index.configs, HARNESS_FILE).check_function(harness)
    if errors:
        raise ProgramError("harness type errors: " + "; ".join(errors))
    for fn in fns.values():
        errs = Checker(sig, index.globals, index.configs, fn.file).check_function(fn)
        if errs:
            raise ProgramError("type errors: " + "; ".join(errs))
    configs = {name: c.default for name, c in index.configs.items()}
    configs.update(proof.env.config_map)
    symbols = harness_symbols(harness)
    terms_by_symbol: dict = {}
    for t in proof.env.all_preconditions():
        for s in t.subjects:
            terms_by_symbol.setdefault(s, []).append(t)
    for s in list(terms_by_symbol):
        known = s in symbols or any(s == ret_symbol(m) for m in models)
        if not known:
            raise ProgramError(f"precondition references unknown symbol {s!r}")
    checks = instrument(list(fns.values()) + [harness])
    addr = {name: _addr_taken(fn) for name, fn in fns.items()}
    addr["harness"] = _addr_taken(harness)
    loops = {lp.id: (fn, lp) for fn in fns.values() for lp in fn.loops}
    return Program(proof.scope.entry, fns, harness, models, model_sigs,
                   [index.globals[k] for k in sorted(index.globals)], configs,
                   proof.bounds, checks, symbols, terms_by_symbol, addr, loops)


def holds(term, syms: dict) -> bool:
    """Evaluate a precondition term over bound symbol values (ints or pointer tuples)."""
    vals = [syms[s] for s in term.subjects]
    if term.category == "pointer-not-null":
        v = vals[0]
        return not (isinstance(v, tuple) and v[0] is None and v[1] == 0) and v != 0
    if term.category == "pointer-offset":
        p2, p1 = vals
        return p2[0] == p1[0] and p2[1] == p1[1] + term.constant
    a = vals[0]
    b = term.constant if term.category == "variable-constant" else vals[1]
    if isinstance(a, tuple) or isinstance(b, tuple):
        return False
    return {
        "==": a == b, "!=": a != b, "<": a < b,
        "<=": a <= b, ">": a > b, ">=": a >= b,
    }[term.relation]


__all__ = ["Program", "ProgramError", "build_program", "holds", "HARNESS_FILE", "PropertyCheck"]
