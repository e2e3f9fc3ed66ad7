"""Static type checking for MiniC functions.

The checker annotates every expression with its type (``expr.ty``) and
marks fixed-array indexing (``Index.array_len``). Errors are collected,
not raised, so structural-validity reports can list all of them.
"""
from __future__ import annotations

from . import ast as A

VOID_PTR = A.Ty("void", True)

INTRINSIC_RET = {
    "nondet_u8": A.Ty("u8"),
    "nondet_u32": A.Ty("u32"),
    "nondet_i32": A.I32,
    "nondet_int": A.I32,
    "nondet_size": A.SIZE_T,
    "malloc": VOID_PTR,
    "free": A.VOID,
    "memcpy": A.VOID,
    "memset": A.VOID,
}

INTRINSIC_ARGS = {
    "malloc": ("int",),
    "free": ("ptr",),
    "memcpy": ("ptr", "ptr", "int"),
    "memset": ("ptr", "int", "int"),
}


def promote(ty: A.Ty) -> A.Ty:
    return A.I32 if ty.base == "u8" else ty


def arith_type(a: A.Ty, b: A.Ty) -> A.Ty:
    a, b = promote(a), promote(b)
    if "size_t" in (a.base, b.base):
        return A.SIZE_T
    if "u32" in (a.base, b.base):
        return A.Ty("u32")
    return A.I32


def literal_type(value: int) -> A.Ty:
    if A.in_range(value, A.I32):
        return A.I32
    if A.in_range(value, A.Ty("u32")):
        return A.Ty("u32")
    return A.SIZE_T


class TypeErrorMC(Exception):
    pass


class Checker:
    def __init__(self, signatures, globals_: dict, configs: dict, file: str = ""):
        """``signatures`` maps a callee name to a FunctionDef (or None if unknown)."""
        self.signatures = signatures
        self.globals = globals_
        self.configs = configs
        self.errors: list = []
        self.file = file
        self.scopes: list = []
        self.ret: A.Ty = A.VOID

    def err(self, node, msg: str) -> None:
        self.errors.append(f"{self.file}:{getattr(node, 'line', 0)}: {msg}")

    # environment
    def lookup(self, name: str):
        for sc in reversed(self.scopes):
            if name in sc:
                return sc[name]
        if name in self.globals:
            g = self.globals[name]
            return (g.ty, g.array_len)
        if name in self.configs:
            return (A.I32, None)
        return None

    def declare(self, node, name: str, ty: A.Ty, array_len=None) -> None:
        if name in self.scopes[-1]:
            self.err(node, f"redeclaration of {name!r}")
        self.scopes[-1][name] = (ty, array_len)

    # entry
    def check_function(self, fn: A.FunctionDef) -> list:
        self.ret = fn.return_type
        self.scopes = [{}]
        for p in fn.params:
            if p.ty.base == "void" and not p.ty.ptr:
                self.err(fn, f"parameter {p.name!r} has void type")
            self.declare(fn, p.name, p.ty)
        self.stmt(fn.body)
        return self.errors

    # statements
    def stmt(self, s: A.Stmt) -> None:
        if isinstance(s, A.Block):
            self.scopes.append({})
            for c in s.stmts:
                self.stmt(c)
            self.scopes.pop()
        elif isinstance(s, A.VarDecl):
            if s.ty.base == "void" and not s.ty.ptr:
                self.err(s, f"variable {s.name!r} has void type")
            if s.array_len is not None:
                if s.ty.ptr:
                    self.err(s, "arrays of pointers are not supported")
                if s.init is not None:
                    self.err(s, "array initializers are not supported")
            elif s.init is not None:
                self.assignable(s, s.ty, self.expr(s.init), s.init)
            self.declare(s, s.name, s.ty, s.array_len)
        elif isinstance(s, A.If):
            self.cond(s.cond)
            self.stmt(s.then)
            if s.else_ is not None:
                self.stmt(s.else_)
        elif isinstance(s, A.While):
            self.cond(s.cond)
            self.stmt(s.body)
        elif isinstance(s, A.For):
            self.scopes.append({})
            if s.init is not None:
                self.stmt(s.init)
            if s.cond is not None:
                self.cond(s.cond)
            if s.step is not None:
                self.expr(s.step)
            self.stmt(s.body)
            self.scopes.pop()
        elif isinstance(s, A.Return):
            if s.value is None:
                if self.ret != A.VOID:
                    self.err(s, "missing return value")
            else:
                if self.ret == A.VOID:
                    self.err(s, "return value in void function")
                else:
                    self.assignable(s, self.ret, self.expr(s.value), s.value)
        elif isinstance(s, A.ExprStmt):
            self.expr(s.expr)
        elif isinstance(s, (A.Assume, A.Assert)):
            self.cond(s.cond)
        elif isinstance(s, (A.Empty, A.Saturate)):
            pass
        else:
            self.err(s, f"unsupported statement {type(s).__name__}")

    def cond(self, e: A.Expr) -> None:
        t = self.expr(e)
        if t == A.VOID:
            self.err(e, "condition has void type")

    def assignable(self, node, dst: A.Ty, src: A.Ty, src_expr=None) -> None:
        if src is None:
            return
        if dst.is_int and src.is_int:
            return
        if dst.ptr and src.ptr and (src.base == "void" or dst.base == "void" or src.base == dst.base):
            return
        self.err(node, f"cannot convert {src} to {dst}")

    # expressions
    def expr(self, e: A.Expr) -> A.Ty:
        t = self._expr(e)
        e.ty = t
        return t

    def _lvalue(self, e: A.Expr) -> None:
        if isinstance(e, A.Name):
            b = self.lookup(e.id)
            if b is not None and b[1] is not None:
                self.err(e, f"cannot assign to array {e.id!r}")
            if e.id in self.configs and not any(e.id in sc for sc in self.scopes):
                self.err(e, f"cannot assign to config {e.id!r}")
        elif not isinstance(e, (A.Index, A.Deref)):
            self.err(e, "expression is not assignable")

    def _expr(self, e: A.Expr) -> A.Ty:
        if isinstance(e, A.IntLit):
            return literal_type(e.value)
        if isinstance(e, A.NullLit):
            return VOID_PTR
        if isinstance(e, A.Name):
            b = self.lookup(e.id)
            if b is None:
                self.err(e, f"undeclared identifier {e.id!r}")
                return A.I32
            ty, n = b
            return A.Ty(ty.base, True) if n is not None else ty
        if isinstance(e, A.Unary):
            t = self.expr(e.operand)
            if e.op == "!":
                return A.I32
            if not t.is_int:
                self.err(e, f"operator {e.op} needs an integer")
                return A.I32
            return promote(t)
        if isinstance(e, A.Binary):
            lt, rt = self.expr(e.left), self.expr(e.right)
            op = e.op
            if op in ("&&", "||"):
                return A.I32
            if op in ("==", "!=", "<", "<=", ">", ">="):
                if lt.ptr != rt.ptr:
                    self.err(e, f"comparison between {lt} and {rt}")
                return A.I32
            if op in ("+", "-") and lt.ptr and rt.is_int:
                if lt.base == "void":
                    self.err(e, "arithmetic on void pointer")
                return lt
            if op == "+" and rt.ptr and lt.is_int:
                return rt
            if not (lt.is_int and rt.is_int):
                self.err(e, f"invalid operands to {op}: {lt}, {rt}")
                return A.I32
            if op in ("<<", ">>"):
                return promote(lt)
            return arith_type(lt, rt)
        if isinstance(e, A.Assign):
            self._lvalue(e.target)
            tt = self.expr(e.target)
            vt = self.expr(e.value)
            if e.op == "=":
                self.assignable(e, tt, vt)
            elif tt.ptr:
                if e.op not in ("+=", "-=") or not vt.is_int:
                    self.err(e, f"invalid pointer update {e.op}")
            elif not vt.is_int:
                self.err(e, f"invalid operands to {e.op}")
            return tt
        if isinstance(e, A.IncDec):
            self._lvalue(e.target)
            t = self.expr(e.target)
            if not (t.is_int or (t.ptr and t.base != "void")):
                self.err(e, f"invalid operand to {e.op}")
            return t
        if isinstance(e, A.Index):
            bt = self.expr(e.base)
            it = self.expr(e.index)
            if not it.is_int:
                self.err(e, "array index is not an integer")
            if isinstance(e.base, A.Name):
                b = self.lookup(e.base.id)
                if b is not None and b[1] is not None:
                    e.array_len = b[1]
            if not bt.ptr or bt.base == "void":
                self.err(e, "subscripted value is not an array or typed pointer")
                return A.I32
            return bt.pointee()
        if isinstance(e, A.Deref):
            t = self.expr(e.ptr)
            if not t.ptr or t.base == "void":
                self.err(e, "dereference of non-pointer or void pointer")
                return A.I32
            return t.pointee()
        if isinstance(e, A.AddrOf):
            t = self.expr(e.target)
            if isinstance(e.target, A.Name):
                b = self.lookup(e.target.id)
                if b is not None and b[1] is not None:
                    self.err(e, "address of array; use the array name")
                if e.target.id in self.configs and not any(e.target.id in sc for sc in self.scopes):
                    self.err(e, "address of config constant")
            if t.ptr:
                self.err(e, "pointer to pointer is not supported")
                return t
            return A.Ty(t.base, True)
        if isinstance(e, A.Call):
            return self.call(e)
        if isinstance(e, A.Cast):
            t = self.expr(e.expr)
            if e.to == A.VOID or (t.ptr and not e.to.ptr):
                self.err(e, f"invalid cast from {t} to {e.to}")
            return e.to
        self.err(e, f"unsupported expression {type(e).__name__}")
        return A.I32

    def call(self, e: A.Call) -> A.Ty:
        argtys = [self.expr(a) for a in e.args]
        if e.name in INTRINSIC_RET:
            kinds = INTRINSIC_ARGS.get(e.name, ())
            if len(kinds) != len(argtys):
                self.err(e, f"{e.name} expects {len(kinds)} arguments")
            for k, t in zip(kinds, argtys):
                if (k == "ptr") != t.ptr:
                    self.err(e, f"bad argument type {t} for {e.name}")
            return INTRINSIC_RET[e.name]
        sig = self.signatures(e.name)
        if sig is None:
            self.err(e, f"call to undeclared function {e.name!r}")
            return A.I32
        if len(sig.params) != len(argtys):
            self.err(e, f"{e.name} expects {len(sig.params)} arguments, got {len(argtys)}")
        for p, t in zip(sig.params, argtys):
            self.assignable(e, p.ty, t)
        return sig.return_type


def check_function(fn: A.FunctionDef, signatures, globals_: dict, configs: dict) -> list:
    return Checker(signatures, globals_, configs, fn.file).check_function(fn)


def check_project(index) -> list:
    errors = []
    for fn in index.functions.values():
        errors += check_function(fn, index.signature, index.globals, index.configs)
    return errors
