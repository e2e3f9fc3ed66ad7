"""AST node definitions for MiniC.

Positions (``line``, ``col``) and the type annotation ``ty`` are excluded
from equality so that two parses of reprinted source compare equal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

INT_TYPES = ("u8", "u32", "i32", "size_t")

WIDTH = {"u8": 1, "u32": 4, "i32": 4, "size_t": 8}

RANGE = {
    "u8": (0, 0xFF),
    "u32": (0, 0xFFFFFFFF),
    "i32": (-(2**31), 2**31 - 1),
    "size_t": (0, 2**64 - 1),
}


@dataclass(frozen=True)
class Ty:
    base: str
    ptr: bool = False

    def __str__(self) -> str:
        return self.base + ("*" if self.ptr else "")

    @property
    def is_int(self) -> bool:
        return not self.ptr and self.base in INT_TYPES

    @property
    def is_signed(self) -> bool:
        return self.is_int and self.base == "i32"

    @property
    def width(self) -> int:
        return 8 if self.ptr else WIDTH[self.base]

    def pointee(self) -> "Ty":
        return Ty(self.base)


VOID = Ty("void")
I32 = Ty("i32")
SIZE_T = Ty("size_t")


def wrap(value: int, ty: Ty) -> int:
    lo, hi = RANGE[ty.base]
    span = hi - lo + 1
    return (value - lo) % span + lo


def in_range(value: int, ty: Ty) -> bool:
    lo, hi = RANGE[ty.base]
    return lo <= value <= hi


# --- expressions -----------------------------------------------------------


@dataclass(eq=True)
class Expr:
    pass


def _pos():
    return field(default=0, compare=False, repr=False)


def _ty():
    return field(default=None, compare=False, repr=False)


@dataclass(eq=True)
class IntLit(Expr):
    value: int
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


@dataclass(eq=True)
class NullLit(Expr):
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


@dataclass(eq=True)
class Name(Expr):
    id: str
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


@dataclass(eq=True)
class Unary(Expr):
    op: str  # - ! ~
    operand: Expr
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


@dataclass(eq=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


@dataclass(eq=True)
class Assign(Expr):
    op: str  # = += -= *= ...
    target: Expr
    value: Expr
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


@dataclass(eq=True)
class IncDec(Expr):
    op: str  # ++ --
    prefix: bool
    target: Expr
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


@dataclass(eq=True)
class Index(Expr):
    base: Expr
    index: Expr
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()
    # element count when ``base`` names a fixed array (set by the type checker)
    array_len: Optional[int] = field(default=None, compare=False, repr=False)


@dataclass(eq=True)
class Deref(Expr):
    ptr: Expr
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


@dataclass(eq=True)
class AddrOf(Expr):
    target: Expr
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


@dataclass(eq=True)
class Call(Expr):
    name: str
    args: list
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


@dataclass(eq=True)
class Cast(Expr):
    to: Ty
    expr: Expr
    line: int = _pos()
    col: int = _pos()
    ty: Optional[Ty] = _ty()


# --- statements ------------------------------------------------------------


@dataclass(eq=True)
class Stmt:
    pass


@dataclass(eq=True)
class Block(Stmt):
    stmts: list
    line: int = _pos()


@dataclass(eq=True)
class VarDecl(Stmt):
    ty: Ty
    name: str
    array_len: Optional[int] = None
    init: Optional[Expr] = None
    line: int = _pos()
    col: int = _pos()


@dataclass(eq=True)
class If(Stmt):
    cond: Expr
    then: Stmt
    else_: Optional[Stmt] = None
    line: int = _pos()


@dataclass(eq=True)
class While(Stmt):
    cond: Expr
    body: Stmt
    loop_id: str = field(default="", compare=False)
    line: int = _pos()
    end_line: int = _pos()


@dataclass(eq=True)
class For(Stmt):
    init: Optional[Stmt]
    cond: Optional[Expr]
    step: Optional[Expr]
    body: Stmt
    loop_id: str = field(default="", compare=False)
    line: int = _pos()
    end_line: int = _pos()


@dataclass(eq=True)
class Return(Stmt):
    value: Optional[Expr] = None
    line: int = _pos()


@dataclass(eq=True)
class ExprStmt(Stmt):
    expr: Expr
    line: int = _pos()


@dataclass(eq=True)
class Assume(Stmt):
    cond: Expr
    line: int = _pos()


@dataclass(eq=True)
class Assert(Stmt):
    cond: Expr
    line: int = _pos()
    col: int = _pos()


@dataclass(eq=True)
class Empty(Stmt):
    line: int = _pos()


@dataclass(eq=True)
class Saturate(Stmt):
    """Unwinding probe: reached only when a loop guard still holds past its bound."""

    loop_id: str
    line: int = _pos()


Loop = Union[While, For]


# --- top level -------------------------------------------------------------


@dataclass(eq=True)
class Param:
    ty: Ty
    name: str
    array_len: Optional[int] = None


@dataclass(eq=True)
class ConfigDecl:
    name: str
    default: int
    candidates: Optional[tuple] = None
    line: int = _pos()


@dataclass(eq=True)
class LoopInfo:
    id: str
    header_line: int
    kind: str  # "for" | "while"
    end_line: int = 0
    induction_hint: Optional[tuple] = None  # (var, initial, stride)


@dataclass(eq=True)
class FunctionDef:
    name: str
    params: list
    return_type: Ty
    body: Optional[Block]
    loops: list = field(default_factory=list, compare=False)
    file: str = field(default="", compare=False)
    line: int = _pos()
    end_line: int = _pos()

    @property
    def key(self) -> tuple:
        return (self.file, self.name)


@dataclass(eq=True)
class SourceUnit:
    path: str
    functions: list
    globals: list = field(default_factory=list)
    configs: list = field(default_factory=list)
    prototypes: list = field(default_factory=list)
    line_count: int = field(default=0, compare=False)


# --- traversal helpers -----------------------------------------------------


def iter_stmts(stmt):
    """Pre-order walk over statements."""
    if stmt is None:
        return
    yield stmt
    if isinstance(stmt, Block):
        for s in stmt.stmts:
            yield from iter_stmts(s)
    elif isinstance(stmt, If):
        yield from iter_stmts(stmt.then)
        yield from iter_stmts(stmt.else_)
    elif isinstance(stmt, While):
        yield from iter_stmts(stmt.body)
    elif isinstance(stmt, For):
        yield from iter_stmts(stmt.init)
        yield from iter_stmts(stmt.body)


def stmt_exprs(stmt):
    """Expressions directly owned by a statement (not nested statements)."""
    if isinstance(stmt, VarDecl):
        return [stmt.init] if stmt.init is not None else []
    if isinstance(stmt, (If, While, Assume, Assert)):
        return [stmt.cond]
    if isinstance(stmt, For):
        return [e for e in (stmt.cond, stmt.step) if e is not None]
    if isinstance(stmt, Return):
        return [stmt.value] if stmt.value is not None else []
    if isinstance(stmt, ExprStmt):
        return [stmt.expr]
    return []


def iter_expr(expr):
    if expr is None:
        return
    yield expr
    if isinstance(expr, Unary):
        yield from iter_expr(expr.operand)
    elif isinstance(expr, Binary):
        yield from iter_expr(expr.left)
        yield from iter_expr(expr.right)
    elif isinstance(expr, Assign):
        yield from iter_expr(expr.target)
        yield from iter_expr(expr.value)
    elif isinstance(expr, IncDec):
        yield from iter_expr(expr.target)
    elif isinstance(expr, Index):
        yield from iter_expr(expr.base)
        yield from iter_expr(expr.index)
    elif isinstance(expr, Deref):
        yield from iter_expr(expr.ptr)
    elif isinstance(expr, AddrOf):
        yield from iter_expr(expr.target)
    elif isinstance(expr, Call):
        for a in expr.args:
            yield from iter_expr(a)
    elif isinstance(expr, Cast):
        yield from iter_expr(expr.expr)


def iter_all_exprs(stmt):
    for s in iter_stmts(stmt):
        for e in stmt_exprs(s):
            yield from iter_expr(e)


def calls_in(stmt):
    return [e for e in iter_all_exprs(stmt) if isinstance(e, Call)]
