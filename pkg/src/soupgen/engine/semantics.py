"""Primitive semantics shared by the engine and the reference interpreter.

Only value-level helpers live here (domains, C division, check catalogue).
Control flow and memory are implemented separately by each interpreter.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..minic import ast as A

POINTER_KINDS = (
    "null-deref", "invalid-deref", "deallocated-deref", "dead-object-deref", "oob-pointer-deref",
)
ARRAY_KINDS = ("array-lower-bound", "array-upper-bound")
SHIFT_KINDS = ("shift-distance-negative", "shift-distance-too-large")
MEMCPY_KINDS = ("memcpy-src-readable", "memcpy-dst-writeable", "memcpy-overlap")
FREE_KINDS = ("double-free", "free-dynamic", "free-offset-zero")
OVERFLOW_KIND = {"+": "signed-overflow-add", "-": "signed-overflow-sub", "*": "signed-overflow-mul"}

CHECK_KINDS = (
    POINTER_KINDS + ARRAY_KINDS
    + ("signed-overflow-add", "signed-overflow-sub", "signed-overflow-mul")
    + SHIFT_KINDS + ("div-by-zero",) + MEMCPY_KINDS + ("memset-dst-writeable",)
    + ("free-offset-zero", "free-dynamic", "double-free")
)
# user assertions are reported alongside the memory-safety kinds
ALL_KINDS = CHECK_KINDS + ("assertion",)

GUARDS = {
    "null-deref": "p != NULL",
    "invalid-deref": "p points to an object",
    "deallocated-deref": "object(p) is not deallocated",
    "dead-object-deref": "object(p) is alive",
    "oob-pointer-deref": "0 <= offset(p) && offset(p) + w <= |object(p)|",
    "array-lower-bound": "i >= 0",
    "array-upper-bound": "i < |a|",
    "signed-overflow-add": "MIN <= x + y <= MAX",
    "signed-overflow-sub": "MIN <= x - y <= MAX",
    "signed-overflow-mul": "MIN <= x * y <= MAX",
    "shift-distance-negative": "k >= 0",
    "shift-distance-too-large": "k < bits(x)",
    "div-by-zero": "y != 0",
    "memcpy-src-readable": "src[0..n) readable",
    "memcpy-dst-writeable": "dst[0..n) writeable",
    "memcpy-overlap": "src[0..n) and dst[0..n) disjoint",
    "memset-dst-writeable": "dst[0..n) writeable",
    "free-offset-zero": "p == NULL || offset(p) == 0",
    "free-dynamic": "p == NULL || object(p) is dynamic",
    "double-free": "object(p) not already deallocated",
    "assertion": "cond",
}

STOP_KINDS = frozenset(POINTER_KINDS + ARRAY_KINDS + ("div-by-zero",) + MEMCPY_KINDS
                       + ("memset-dst-writeable",) + FREE_KINDS)


@dataclass(frozen=True)
class DomainConfig:
    """Finite nondet domains; ``int_cap`` bounds the small-value range."""

    int_cap: int = 16
    u8_max: int = 63
    alloc_cap: int = 16
    recursion_cap: int = 8

    def __post_init__(self):
        if self.int_cap < 1 or self.alloc_cap < 1 or self.u8_max < 0 or self.recursion_cap < 1:
            raise ValueError("domain caps must be positive")


def domain_values(ty: A.Ty, cfg: DomainConfig) -> tuple:
    base = ty.base
    if base == "u8":
        return tuple(range(0, min(cfg.u8_max, 255) + 1))
    lo, hi = A.RANGE[base]
    small = list(range(0, cfg.int_cap))
    if base == "i32":
        return tuple([lo] + small + [hi])
    return tuple(small + [hi])


def alloc_sizes(cfg: DomainConfig) -> tuple:
    return tuple(range(1, cfg.alloc_cap + 1))


def bits(ty: A.Ty) -> int:
    return A.WIDTH[ty.base] * 8


def c_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def c_mod(a: int, b: int) -> int:
    return a - b * c_div(a, b)


def site(kind: str, file: str, line: int, col: int) -> str:
    return f"{kind}@{file}:{line}:{col}"


# --- properties ------------------------------------------------------------


@dataclass(frozen=True, order=True)
class PropertyCheck:
    id: str
    kind: str
    file: str
    line: int
    col: int
    function: str

    @property
    def location(self) -> tuple:
        return (self.file, self.line)

    @property
    def guard(self) -> str:
        return GUARDS[self.kind]

    @property
    def key(self) -> tuple:
        return (self.file, self.line, self.col, self.kind)


def expr_kinds(e: A.Expr) -> tuple:
    """Check kinds attached to one expression node, in evaluation order."""
    from ..minic.typecheck import arith_type, promote

    if isinstance(e, A.Index):
        return ARRAY_KINDS if e.array_len is not None else POINTER_KINDS
    if isinstance(e, A.Deref):
        return POINTER_KINDS
    if isinstance(e, A.Binary):
        if e.op in OVERFLOW_KIND and e.ty is not None and e.ty.is_signed:
            return (OVERFLOW_KIND[e.op],)
        if e.op in ("<<", ">>"):
            return SHIFT_KINDS
        if e.op in ("/", "%"):
            return ("div-by-zero",)
        return ()
    if isinstance(e, A.Unary):
        if e.op == "-" and e.ty is not None and e.ty.is_signed:
            return ("signed-overflow-sub",)
        return ()
    if isinstance(e, A.Assign):
        op = e.op[:-1]
        tt, vt = e.target.ty, e.value.ty
        if op in OVERFLOW_KIND and tt is not None and tt.is_int and vt is not None \
                and arith_type(tt, vt).is_signed:
            return (OVERFLOW_KIND[op],)
        if op in ("<<", ">>"):
            return SHIFT_KINDS
        if op in ("/", "%"):
            return ("div-by-zero",)
        return ()
    if isinstance(e, A.IncDec):
        t = e.target.ty
        if t is not None and t.is_int and promote(t).is_signed:
            return ("signed-overflow-add" if e.op == "++" else "signed-overflow-sub",)
        return ()
    if isinstance(e, A.Call):
        if e.name == "free":
            return FREE_KINDS
        if e.name == "memcpy":
            return MEMCPY_KINDS
        if e.name == "memset":
            return ("memset-dst-writeable",)
    return ()


def instrument(functions) -> list:
    """One PropertyCheck per risky operation occurrence, ids numbered per (kind, line)."""
    raw = []
    for fn in sorted(functions, key=lambda f: (f.file, f.line, f.name)):
        for s in A.iter_stmts(fn.body):
            if isinstance(s, A.Assert):
                raw.append(("assertion", fn.file, s.line, s.col, fn.name))
            for root in A.stmt_exprs(s):
                for e in A.iter_expr(root):
                    for k in expr_kinds(e):
                        raw.append((k, fn.file, e.line, e.col, fn.name))
    counter: dict = {}
    out = []
    seen = set()
    for kind, file, line, col, fname in raw:
        if (file, line, col, kind) in seen:
            continue
        seen.add((file, line, col, kind))
        n = counter.get((kind, file, line), 0) + 1
        counter[(kind, file, line)] = n
        out.append(PropertyCheck(f"{kind}@{file}:{line}:{n}", kind, file, line, col, fname))
    return out
