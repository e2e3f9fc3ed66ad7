"""Pretty-printer: AST back to MiniC source text."""
from __future__ import annotations

from . import ast as A


def expr_str(e: A.Expr) -> str:
    if isinstance(e, A.IntLit):
        return str(e.value)
    if isinstance(e, A.NullLit):
        return "NULL"
    if isinstance(e, A.Name):
        return e.id
    if isinstance(e, A.Unary):
        return f"{e.op}({expr_str(e.operand)})"
    if isinstance(e, A.Binary):
        return f"({expr_str(e.left)} {e.op} {expr_str(e.right)})"
    if isinstance(e, A.Assign):
        return f"{expr_str(e.target)} {e.op} {expr_str(e.value)}"
    if isinstance(e, A.IncDec):
        t = expr_str(e.target)
        return f"{e.op}{t}" if e.prefix else f"{t}{e.op}"
    if isinstance(e, A.Index):
        return f"{expr_str(e.base)}[{expr_str(e.index)}]"
    if isinstance(e, A.Deref):
        return f"*({expr_str(e.ptr)})"
    if isinstance(e, A.AddrOf):
        return f"&{expr_str(e.target)}"
    if isinstance(e, A.Call):
        return f"{e.name}({', '.join(expr_str(a) for a in e.args)})"
    if isinstance(e, A.Cast):
        return f"({e.to})({expr_str(e.expr)})"
    raise TypeError(f"cannot print {type(e).__name__}")


def _decl_str(d: A.VarDecl) -> str:
    s = f"{d.ty} {d.name}"
    if d.array_len is not None:
        s += f"[{d.array_len}]"
    if d.init is not None:
        s += f" = {expr_str(d.init)}"
    return s + ";"


def stmt_lines(s: A.Stmt, indent: int = 1) -> list:
    pad = "  " * indent
    if isinstance(s, A.Block):
        out = [pad + "{"]
        for c in s.stmts:
            out += stmt_lines(c, indent + 1)
        return out + [pad + "}"]
    if isinstance(s, A.VarDecl):
        return [pad + _decl_str(s)]
    if isinstance(s, A.If):
        out = [pad + f"if ({expr_str(s.cond)})"] + _body(s.then, indent)
        if s.else_ is not None:
            out += [pad + "else"] + _body(s.else_, indent)
        return out
    if isinstance(s, A.While):
        return [pad + f"while ({expr_str(s.cond)})"] + _body(s.body, indent)
    if isinstance(s, A.For):
        if s.init is None:
            init = ";"
        elif isinstance(s.init, A.VarDecl):
            init = _decl_str(s.init)
        else:
            init = expr_str(s.init.expr) + ";"
        cond = expr_str(s.cond) if s.cond is not None else ""
        step = expr_str(s.step) if s.step is not None else ""
        return [pad + f"for ({init} {cond}; {step})"] + _body(s.body, indent)
    if isinstance(s, A.Return):
        return [pad + ("return;" if s.value is None else f"return {expr_str(s.value)};")]
    if isinstance(s, A.ExprStmt):
        return [pad + expr_str(s.expr) + ";"]
    if isinstance(s, A.Assume):
        return [pad + f"assume({expr_str(s.cond)});"]
    if isinstance(s, A.Assert):
        return [pad + f"assert({expr_str(s.cond)});"]
    if isinstance(s, A.Empty):
        return [pad + ";"]
    raise TypeError(f"cannot print {type(s).__name__}")


def _body(s: A.Stmt, indent: int) -> list:
    return stmt_lines(s, indent if isinstance(s, A.Block) else indent + 1)


def _param_str(p: A.Param) -> str:
    if p.array_len is not None:
        return f"{p.ty.base} {p.name}[{p.array_len}]"
    return f"{p.ty} {p.name}"


def function_str(fn: A.FunctionDef) -> str:
    params = ", ".join(_param_str(p) for p in fn.params)
    if fn.body is None:
        return f"{fn.return_type} {fn.name}({params});\n"
    lines = [f"{fn.return_type} {fn.name}({params})"] + stmt_lines(fn.body, 0)
    return "\n".join(lines) + "\n"


def unit_str(unit: A.SourceUnit) -> str:
    out = []
    for c in unit.configs:
        if c.candidates is not None:
            cands = ", ".join(str(v) for v in c.candidates)
            out.append(f"config {c.name} in {{{cands}}} = {c.default};")
        else:
            out.append(f"config {c.name} = {c.default};")
    for g in unit.globals:
        out.append(_decl_str(g))
    for fn in unit.prototypes:
        out.append(function_str(fn))
    for fn in unit.functions:
        out.append(function_str(fn))
    return "\n".join(out) + "\n"
