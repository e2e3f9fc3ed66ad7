"""Small syntactic queries used by the refinement stages."""
from __future__ import annotations

from .minic import ast as A
from .minic.index import ProjectIndex, callsites_of
from .proof import ret_symbol


def names_in(expr) -> set:
    return {e.id for e in A.iter_expr(expr) if isinstance(e, A.Name)}


def stmt_span(s) -> tuple:
    lines = [x.line for x in A.iter_stmts(s) if getattr(x, "line", 0)]
    end = getattr(s, "end_line", 0)
    return (min(lines), max(lines + [end]))


def enclosing_guards(fn: A.FunctionDef, line: int) -> list:
    """Conditions of the ifs and loops whose bodies contain ``line``, outermost first."""
    out = []

    def walk(s):
        if isinstance(s, A.Block):
            for c in s.stmts:
                walk(c)
        elif isinstance(s, A.If):
            for branch in (s.then, s.else_):
                if branch is not None and _contains(branch, line):
                    out.append((s, s.cond))
                    walk(branch)
        elif isinstance(s, (A.While, A.For)):
            if s.line < line <= max(stmt_span(s)[1], s.end_line):
                if s.cond is not None:
                    out.append((s, s.cond))
                walk(s.body)

    walk(fn.body)
    return out


def _contains(s, line) -> bool:
    lo, hi = stmt_span(s)
    if isinstance(s, A.Block) and s.line:
        lo = min(lo, s.line)
    return lo <= line <= hi


def loop_node(fn: A.FunctionDef, loop_id: str):
    for s in A.iter_stmts(fn.body):
        if isinstance(s, (A.While, A.For)) and s.loop_id == loop_id:
            return s
    return None


def loop_start(fn: A.FunctionDef, loop, var: str):
    """Initial value of ``var`` before ``loop``: the last constant assignment above the header."""
    best = None
    for s in A.iter_stmts(fn.body):
        if s.line >= loop.line and s is not getattr(loop, "init", None):
            continue
        val = None
        if isinstance(s, A.VarDecl) and s.name == var and isinstance(s.init, A.IntLit):
            val = s.init.value
        elif isinstance(s, A.ExprStmt) and isinstance(s.expr, A.Assign) and s.expr.op == "=" \
                and isinstance(s.expr.target, A.Name) and s.expr.target.id == var \
                and isinstance(s.expr.value, A.IntLit):
            val = s.expr.value.value
        if val is not None and (best is None or s.line >= best[0]):
            best = (s.line, val)
    return best[1] if best else None


def constant_value(expr, configs: dict):
    """Integer value of a literal or config name, else None."""
    if isinstance(expr, A.IntLit):
        return expr.value
    if isinstance(expr, A.Name) and expr.id in configs:
        return configs[expr.id]
    if isinstance(expr, A.Cast):
        return constant_value(expr.expr, configs)
    return None


def local_decl(fn: A.FunctionDef, name: str):
    for s in A.iter_stmts(fn.body):
        if isinstance(s, A.VarDecl) and s.name == name:
            return s
    return None


def context_array_sizes(index: ProjectIndex, entry: str, param_pos: int) -> list:
    """Fixed-array lengths passed for one pointer parameter at the entry's callsites."""
    sizes = []
    try:
        sites = callsites_of(index, entry)
    except Exception:
        return sizes
    for (cfile, cname), (_, line, col) in sites:
        caller = index.function(cname, cfile)
        for call in A.calls_in(caller.body):
            if call.name != entry or call.line != line or call.col != col:
                continue
            if param_pos >= len(call.args):
                continue
            arg = call.args[param_pos]
            if isinstance(arg, A.Name):
                d = local_decl(caller, arg.id) or index.globals.get(arg.id)
                if d is not None and d.array_len is not None:
                    sizes.append(d.array_len)
    return sizes


def harness_lower_bound(harness: A.FunctionDef, sym: str, preconditions=()) -> int:
    """Smallest value of ``sym`` admitted by the harness assumes and preconditions."""
    lo = 0
    for s in harness.body.stmts:
        if isinstance(s, A.Assume) and isinstance(s.cond, A.Binary) \
                and isinstance(s.cond.left, A.Name) and s.cond.left.id == sym \
                and isinstance(s.cond.right, A.IntLit):
            c = s.cond.right.value
            if s.cond.op == ">=":
                lo = max(lo, c)
            elif s.cond.op == ">":
                lo = max(lo, c + 1)
    for t in preconditions:
        if t.category == "variable-constant" and t.subjects[0] == sym:
            if t.relation == ">=":
                lo = max(lo, t.constant)
            elif t.relation == ">":
                lo = max(lo, t.constant + 1)
    return lo


def assume_lower_bound(fn: A.FunctionDef, sym: str):
    lo = None
    for s in A.iter_stmts(fn.body):
        if isinstance(s, A.Assume) and isinstance(s.cond, A.Binary) \
                and isinstance(s.cond.left, A.Name) and s.cond.left.id == sym \
                and isinstance(s.cond.right, A.IntLit):
            c = s.cond.right.value + (1 if s.cond.op == ">" else 0)
            if s.cond.op in (">=", ">"):
                lo = c if lo is None else max(lo, c)
    return lo


def symbol_of(fn: A.FunctionDef, name: str, entry: A.FunctionDef, models, depth: int = 3):
    """Environment symbol whose value ``name`` carries inside the entry function.

    Parameters of the entry map to their harness symbol (same name); locals
    initialized from a modeled call map to ``ret_of(f)``; plain copies are
    followed a few steps.
    """
    if fn is entry and any(p.name == name and not p.ty.ptr for p in entry.params):
        return name
    d = local_decl(fn, name)
    if d is None or d.init is None or depth == 0:
        return None
    init = d.init
    while isinstance(init, A.Cast):
        init = init.expr
    if isinstance(init, A.Call) and init.name in models:
        return ret_symbol(init.name)
    if isinstance(init, A.Name):
        return symbol_of(fn, init.id, entry, models, depth - 1)
    return None
