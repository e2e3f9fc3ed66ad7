"""Path executor for unrolled unit proofs.

One ``Executor`` runs one path. Nondeterministic choices are resolved from
a choice trail (``ChoiceTrail``) so that the search in ``verify`` can replay
a prefix and branch at the last open choice point.
"""
from __future__ import annotations

from ..minic import ast as A
from ..minic.typecheck import arith_type, promote
from ..proof import ret_symbol
from .memory import DEAD, FREED, LIVE, NULL, Memory
from .program import Program, holds
from .semantics import (
    FREE_KINDS, MEMCPY_KINDS, OVERFLOW_KIND, DomainConfig, alloc_sizes, bits, c_div, c_mod,
    domain_values, site,
)
from .unroll import Seq, Step

INVALID = (None, 1)


class Stop(Exception):
    """The current path ends: ``pruned``, ``saturated`` or ``stopped``."""

    def __init__(self, kind):
        super().__init__(kind)
        self.kind = kind


class EngineError(Exception):
    pass


class ChoiceTrail:
    """Depth-first choice sequence: entries are ``[index, arity]``."""

    def __init__(self):
        self.entries: list = []
        self.pos = 0

    def reset(self):
        self.pos = 0

    def pick(self, arity: int) -> int:
        if self.pos < len(self.entries):
            idx = self.entries[self.pos][0]
        else:
            self.entries.append([0, arity])
            idx = 0
        self.pos += 1
        return idx

    def advance(self) -> bool:
        """Move to the next unexplored path; False when the search is exhausted."""
        del self.entries[self.pos:]
        while self.entries and self.entries[-1][0] == self.entries[-1][1] - 1:
            self.entries.pop()
        if not self.entries:
            return False
        self.entries[-1][0] += 1
        return True


class FixedChoices:
    """Choice source for witness replay: values looked up by site name."""

    def __init__(self, assignment: dict):
        self.assignment = assignment

    def value(self, name, values):
        if name not in self.assignment:
            raise EngineError(f"witness has no value for {name}")
        return self.assignment[name]


class _Ret:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


class Executor:
    def __init__(self, prog: Program, bodies: dict, cfg: DomainConfig, choices, trace=False):
        self.prog = prog
        self.bodies = bodies  # name -> unrolled FunctionDef (harness included)
        self.cfg = cfg
        self.choices = choices
        self.mem = Memory()
        self.counts: dict = {}
        self.assignment: dict = {}
        self.syms: dict = {}
        self.lines: set = set()
        self.covered: set = set()
        self.violated: list = []
        self.saturated: set = set()
        self.stack: list = []  # frames: [FunctionDef, scopes(list of dict), kills(list of list)]
        self.globals: dict = {}
        self.trace = [] if trace else None
        self.observe: frozenset = frozenset()  # model names whose call arguments are recorded
        self.observed: list = []  # (name, args) with pointers shown as remaining element counts

    # -- choices ------------------------------------------------------------
    def choose(self, base, values):
        k = self.counts.get(base, 0)
        self.counts[base] = k + 1
        name = f"{base}#{k}"
        if isinstance(self.choices, ChoiceTrail):
            v = values[self.choices.pick(len(values))]
        else:
            v = self.choices.value(name, values)
        self.assignment[name] = v
        return v

    # -- checks -------------------------------------------------------------
    def _check(self, node, kind, ok):
        key = (self.stack[-1][0].file, node.line, node.col, kind)
        self.covered.add(key)
        if not ok:
            self.violated.append(key)
            if self.trace is not None:
                self.trace.append({"file": key[0], "line": key[1], "violation": kind})
        return ok

    def _require(self, node, kind, ok):
        if not self._check(node, kind, ok):
            raise Stop("stopped")

    def _deref_checks(self, node, p, width):
        aid, off = p
        self._require(node, "null-deref", p != NULL)
        self._require(node, "invalid-deref", aid is not None)
        a = self.mem[aid]
        self._require(node, "deallocated-deref", a.state != FREED)
        self._require(node, "dead-object-deref", a.state != DEAD)
        self._require(node, "oob-pointer-deref", 0 <= off and off + width <= a.size)

    def _bind(self, sym, value):
        self.syms[sym] = value
        for t in self.prog.terms_by_symbol.get(sym, ()):
            if all(s in self.syms for s in t.subjects) and not holds(t, self.syms):
                raise Stop("pruned")

    # -- run ----------------------------------------------------------------
    def run(self) -> str:
        """Execute the harness; returns how the path ended."""
        try:
            self._init_globals()
            self._call_function(self.bodies["harness"], [])
        except Stop as s:
            return s.kind
        return "complete"

    def _init_globals(self):
        self.stack.append([self.prog.harness, [{}], [[]]])
        for g in self.prog.globals:
            if g.array_len is not None:
                aid = self.mem.alloc(g.array_len * g.ty.width, False, g.name, zero=True)
                self.globals[g.name] = ("arr", aid, g.ty)
            else:
                aid = self.mem.alloc(g.ty.width, False, g.name, zero=True)
                if g.init is not None:
                    self.mem.store(aid, 0, g.ty, self._eval(g.init))
                self.globals[g.name] = ("mem", aid, g.ty)
        self.stack.pop()

    def _var(self, name):
        for scope in reversed(self.stack[-1][1]):
            v = scope.get(name)
            if v is not None:
                return v
        return self.globals.get(name)

    def _mark(self, line, delta=None):
        f = self.stack[-1][0].file
        self.lines.add((f, line))
        if self.trace is not None:
            self.trace.append({"file": f, "line": line, "delta": delta or {}})

    def _delta(self, name, value):
        if self.trace is not None and self.trace:
            self.trace[-1].setdefault("delta", {})[name] = _show(value)

    # -- statements ---------------------------------------------------------
    def _exec(self, s):
        t = type(s)
        if t is Seq:
            for c in s.stmts:
                r = self._exec(c)
                if r is not None:
                    return r
            return None
        if t is A.Block:
            frame = self.stack[-1]
            frame[1].append({})
            frame[2].append([])
            try:
                for c in s.stmts:
                    r = self._exec(c)
                    if r is not None:
                        return r
                return None
            finally:
                frame[1].pop()
                for aid in frame[2].pop():
                    self.mem.kill(aid)
        if t is A.If:
            self._mark(s.line)
            if _truthy(self._eval(s.cond)):
                return self._exec(s.then)
            if s.else_ is not None:
                return self._exec(s.else_)
            return None
        if t is A.VarDecl:
            self._mark(s.line)
            self._declare(s)
            return None
        if t is A.ExprStmt:
            self._mark(s.line)
            self._eval(s.expr)
            return None
        if t is Step:
            self._eval(s.expr)
            return None
        if t is A.Return:
            self._mark(s.line)
            if s.value is None:
                return _Ret(None)
            return _Ret(_convert(self._eval(s.value), self.stack[-1][0].return_type))
        if t is A.Assume:
            self._mark(s.line)
            if not _truthy(self._eval(s.cond)):
                raise Stop("pruned")
            return None
        if t is A.Assert:
            self._mark(s.line)
            self._check(s, "assertion", _truthy(self._eval(s.cond)))
            return None
        if t is A.Saturate:
            self.saturated.add(s.loop_id)
            raise Stop("saturated")
        if t is A.Empty:
            return None
        raise EngineError(f"unsupported statement {t.__name__}")

    def _declare(self, s):
        frame = self.stack[-1]
        fn = frame[0]
        if s.array_len is not None:
            aid = self.mem.alloc(s.array_len * s.ty.width, False, s.name)
            frame[2][-1].append(aid)
            frame[1][-1][s.name] = ("arr", aid, s.ty)
            return
        value = _convert(self._eval(s.init), s.ty) if s.init is not None else None
        if not s.ty.ptr and s.name in self.prog.addr_taken.get(fn.name, ()):
            aid = self.mem.alloc(s.ty.width, False, s.name)
            frame[2][-1].append(aid)
            if value is not None:
                self.mem.store(aid, 0, s.ty, value)
            frame[1][-1][s.name] = ("mem", aid, s.ty)
        else:
            if value is None and s.ty.ptr:
                value = INVALID
            frame[1][-1][s.name] = ["reg", value, s.ty]
        if value is not None:
            self._delta(s.name, value)

    # -- locations ------------------------------------------------------------
    def _place(self, e):
        """Resolve an lvalue to ``("reg", cell)`` or ``("mem", aid, off)``."""
        t = type(e)
        if t is A.Name:
            v = self._var(e.id)
            if v[0] == "reg":
                return ("reg", v)
            return ("mem", v[1], 0)
        if t is A.Index:
            base = self._eval(e.base)
            i = self._eval(e.index)
            w = e.ty.width
            if e.array_len is not None:
                self._require(e, "array-lower-bound", i >= 0)
                self._require(e, "array-upper-bound", i < e.array_len)
                return ("mem", base[0], base[1] + i * w)
            p = (base[0], base[1] + i * w)
            self._deref_checks(e, p, w)
            return ("mem", p[0], p[1])
        if t is A.Deref:
            p = self._eval(e.ptr)
            self._deref_checks(e, p, e.ty.width)
            return ("mem", p[0], p[1])
        raise EngineError("expression is not assignable")

    def _read(self, place, ty, node):
        if place[0] == "reg":
            cell = place[1]
            if cell[1] is None:
                cell[1] = self.choose(self._site("read", node), domain_values(ty, self.cfg))
            return cell[1]
        aid, off = place[1], place[2]
        if self.mem.uninitialized(aid, off, ty.width):
            v = self.choose(self._site("read", node), domain_values(ty, self.cfg))
            self.mem.store(aid, off, ty, v)
            return v
        return self.mem.load(aid, off, ty)

    def _write(self, place, ty, value, node):
        value = _convert(value, ty)
        if place[0] == "reg":
            place[1][1] = value
        else:
            self.mem.store(place[1], place[2], ty, value)
        if self.trace is not None:
            self._delta(_describe(node), value)
        return value

    def _site(self, kind, node):
        return site(kind, self.stack[-1][0].file, node.line, node.col)

    # -- expressions ----------------------------------------------------------
    def _eval(self, e):
        t = type(e)
        if t is A.IntLit:
            return e.value
        if t is A.Name:
            v = self._var(e.id)
            if v is None:
                return self.prog.configs[e.id]
            if v[0] == "arr":
                return (v[1], 0)
            if v[0] == "reg":
                if v[1] is None:
                    v[1] = self.choose(self._site("read", e), domain_values(v[2], self.cfg))
                return v[1]
            return self._read(("mem", v[1], 0), v[2], e)
        if t is A.Binary:
            return self._binary(e)
        if t is A.Call:
            return self._call(e)
        if t is A.Index or t is A.Deref:
            return self._read(self._place(e), e.ty, e)
        if t is A.Assign:
            return self._assign(e)
        if t is A.IncDec:
            return self._incdec(e)
        if t is A.NullLit:
            return NULL
        if t is A.Unary:
            return self._unary(e)
        if t is A.Cast:
            v = self._eval(e.expr)
            if e.to.ptr:
                if isinstance(v, tuple):
                    return v
                return NULL if v == 0 else (None, v)
            return A.wrap(v, e.to)
        if t is A.AddrOf:
            place = self._place(e.target)
            if place[0] == "reg":
                raise EngineError("address of a register variable")
            return (place[1], place[2])
        raise EngineError(f"unsupported expression {t.__name__}")

    def _unary(self, e):
        v = self._eval(e.operand)
        if e.op == "!":
            return 0 if _truthy(v) else 1
        ty = promote(e.operand.ty)
        v = A.wrap(v, ty)
        if e.op == "~":
            return A.wrap(~v, ty)
        if ty.is_signed:
            self._check(e, "signed-overflow-sub", A.in_range(-v, ty))
        return A.wrap(-v, ty)

    def _int_op(self, node, op, a, b, ty):
        if op == "<<" or op == ">>":
            neg_ok = self._check(node, "shift-distance-negative", b >= 0)
            big_ok = self._check(node, "shift-distance-too-large", b < bits(ty))
            if not (neg_ok and big_ok):
                return 0
            return A.wrap(a << b if op == "<<" else a >> b, ty)
        a = A.wrap(a, ty)
        b = A.wrap(b, ty)
        if op == "+":
            r = a + b
        elif op == "-":
            r = a - b
        elif op == "*":
            r = a * b
        elif op == "/" or op == "%":
            self._require(node, "div-by-zero", b != 0)
            return A.wrap(c_div(a, b) if op == "/" else c_mod(a, b), ty)
        elif op == "&":
            return A.wrap(a & b, ty)
        elif op == "|":
            return A.wrap(a | b, ty)
        elif op == "^":
            return A.wrap(a ^ b, ty)
        else:
            raise EngineError(f"unknown operator {op}")
        if ty.is_signed:
            self._check(node, OVERFLOW_KIND[op], A.in_range(r, ty))
        return A.wrap(r, ty)

    def _binary(self, e):
        op = e.op
        if op == "&&":
            if not _truthy(self._eval(e.left)):
                return 0
            return 1 if _truthy(self._eval(e.right)) else 0
        if op == "||":
            if _truthy(self._eval(e.left)):
                return 1
            return 1 if _truthy(self._eval(e.right)) else 0
        a = self._eval(e.left)
        b = self._eval(e.right)
        lt, rt = e.left.ty, e.right.ty
        if op in _CMP:
            if lt.ptr or rt.ptr:
                a = (-1 if a[0] is None else a[0], a[1])
                b = (-1 if b[0] is None else b[0], b[1])
            else:
                ty = arith_type(lt, rt)
                a, b = A.wrap(a, ty), A.wrap(b, ty)
            return 1 if _CMP[op](a, b) else 0
        if lt.ptr:
            d = b * A.WIDTH[lt.base]
            return (a[0], a[1] + d if op == "+" else a[1] - d)
        if rt.ptr:
            return (b[0], b[1] + a * A.WIDTH[rt.base])
        if op == "<<" or op == ">>":
            ty = promote(lt)
            return self._int_op(e, op, A.wrap(a, ty), A.wrap(b, promote(rt)), ty)
        return self._int_op(e, op, a, b, arith_type(lt, rt))

    def _assign(self, e):
        v = self._eval(e.value)
        place = self._place(e.target)
        ty = e.target.ty
        if e.op == "=":
            return self._write(place, ty, v, e.target)
        op = e.op[:-1]
        old = self._read(place, ty, e.target)
        if ty.ptr:
            d = v * A.WIDTH[ty.base]
            new = (old[0], old[1] + d if op == "+" else old[1] - d)
        elif op == "<<" or op == ">>":
            ct = promote(ty)
            new = self._int_op(e, op, A.wrap(old, ct), A.wrap(v, promote(e.value.ty)), ct)
        else:
            new = self._int_op(e, op, old, v, arith_type(ty, e.value.ty))
        return self._write(place, ty, new, e.target)

    def _incdec(self, e):
        place = self._place(e.target)
        ty = e.target.ty
        old = self._read(place, ty, e.target)
        delta = 1 if e.op == "++" else -1
        if ty.ptr:
            new = (old[0], old[1] + delta * A.WIDTH[ty.base])
        else:
            ct = promote(ty)
            r = A.wrap(old, ct) + delta
            if ct.is_signed:
                self._check(e, "signed-overflow-add" if delta > 0 else "signed-overflow-sub",
                            A.in_range(r, ct))
            new = A.wrap(r, ct)
        new = self._write(place, ty, new, e.target)
        return new if e.prefix else old

    # -- calls ----------------------------------------------------------------
    def _call(self, e):
        name = e.name
        args = [self._eval(a) for a in e.args]
        if name in _NONDET:
            return self.choose(self._site("nondet", e), domain_values(e.ty, self.cfg))
        handler = _BUILTINS.get(name)
        if handler is not None:
            return handler(self, e, args)
        fn = self.bodies.get(name)
        if fn is not None and name != "harness":
            return self._call_function(fn, args)
        if name in self.prog.models:
            return self._call_model(name, args)
        raise EngineError(f"call to {name!r}, which is neither in scope nor modeled")

    def _malloc(self, e, args):
        n = A.wrap(args[0], A.SIZE_T)
        if n > 1 << 20:
            raise EngineError(f"allocation of {n} bytes exceeds the engine limit")
        sym = e.args[0].id if isinstance(e.args[0], A.Name) else None
        return (self.mem.alloc(n, True, "malloc", size_symbol=sym), 0)

    def _free(self, e, args):
        p = args[0]
        if p == NULL:
            for k in FREE_KINDS:
                self._check(e, k, True)
            return None
        a = self.mem[p[0]] if p[0] is not None else None
        self._require(e, "double-free", a is None or a.state != FREED)
        self._require(e, "free-dynamic", a is not None and a.dynamic)
        self._require(e, "free-offset-zero", p[1] == 0)
        a.state = FREED
        return None

    def _memcpy(self, e, args):
        dst, src, n = args[0], args[1], A.wrap(args[2], A.SIZE_T)
        self._require(e, MEMCPY_KINDS[0], self.mem.readable(src, n))
        self._require(e, MEMCPY_KINDS[1], self.mem.readable(dst, n))
        overlap = dst[0] == src[0] and n > 0 and dst[1] < src[1] + n and src[1] < dst[1] + n
        self._require(e, MEMCPY_KINDS[2], not overlap)
        self.mem.copy(dst[0], dst[1], src[0], src[1], n)
        return None

    def _memset(self, e, args):
        dst, c, n = args[0], args[1], A.wrap(args[2], A.SIZE_T)
        self._require(e, "memset-dst-writeable", self.mem.readable(dst, n))
        self.mem.fill(dst[0], dst[1], n, c % 256)
        return None

    def _call_function(self, fn, args):
        if sum(1 for fr in self.stack if fr[0].name == fn.name) >= self.cfg.recursion_cap:
            raise EngineError(f"recursion deeper than {self.cfg.recursion_cap} in {fn.name}")
        taken = self.prog.addr_taken.get(fn.name, ())
        scope = {}
        kills = []
        for prm, v in zip(fn.params, args):
            v = _convert(v, prm.ty)
            if prm.name in taken and not prm.ty.ptr:
                aid = self.mem.alloc(prm.ty.width, False, prm.name)
                self.mem.store(aid, 0, prm.ty, v)
                kills.append(aid)
                scope[prm.name] = ("mem", aid, prm.ty)
            else:
                scope[prm.name] = ["reg", v, prm.ty]
        frame = [fn, [scope], [kills]]
        self.stack.append(frame)
        try:
            if fn.name == "harness":
                r = self._harness_body(fn.body)
            else:
                r = self._exec(fn.body)
        finally:
            for lst in frame[2]:
                for aid in lst:
                    self.mem.kill(aid)
            self.stack.pop()
        if r is not None:
            return r.value
        return 0 if fn.return_type != A.VOID else None

    def _harness_body(self, body):
        """Harness top level: each initialized local binds a precondition symbol."""
        frame = self.stack[-1]
        frame[1].append({})
        frame[2].append([])
        for s in body.stmts:
            r = self._exec(s)
            if r is not None:
                return r
            if type(s) is A.VarDecl and s.init is not None:
                v = frame[1][-1][s.name]
                self._bind(s.name, v[1] if v[0] == "reg" else self.mem.load(v[1], 0, v[2]))
        return None

    def _call_model(self, name, args):
        m = self.prog.models[name]
        sig = self.prog.model_sigs[name]
        if name in self.observe:
            self.observed.append((name, tuple(self._observe_arg(v, p.ty) for v, p in zip(args, sig.params))))
        for h in m.side_effects:
            i = next(k for k, prm in enumerate(sig.params) if prm.name == h)
            p = args[i]
            if isinstance(p, tuple) and p[0] is not None:
                a = self.mem[p[0]]
                if a.state == LIVE and 0 <= p[1] <= a.size:
                    self.mem.havoc(p[0], p[1])
        spec = m.return_spec
        if spec.kind == "none":
            return None
        if spec.kind == "nondet":
            v = self.choose(f"model:{name}", domain_values(spec.ty, self.cfg))
        elif spec.kind == "alloc":
            n = self.choose(f"model:{name}.size", alloc_sizes(self.cfg))
            v = (self.mem.alloc(n, True, name), 0)
        else:
            v = (self.mem.alloc(spec.size, True, name), 0)
        self._bind(ret_symbol(name), v)
        return v


    def _observe_arg(self, v, ty):
        if not ty.ptr:
            return v
        aid, off = v
        if aid is None:
            return None
        a = self.mem[aid]
        width = A.WIDTH.get(ty.base, 1) or 1
        return max(a.size - off, 0) // width if a.state == LIVE else None


_NONDET = {"nondet_u8", "nondet_u32", "nondet_i32", "nondet_int", "nondet_size"}
_BUILTINS = {
    "malloc": Executor._malloc,
    "free": Executor._free,
    "memcpy": Executor._memcpy,
    "memset": Executor._memset,
}
_CMP = {
    "==": lambda a, b: a == b, "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b, ">=": lambda a, b: a >= b,
}


def _truthy(v) -> bool:
    if isinstance(v, tuple):
        return v != NULL
    return v != 0


def _convert(v, ty):
    return v if ty.ptr else A.wrap(v, ty)


def _show(v):
    if isinstance(v, tuple):
        return "NULL" if v == NULL else f"&obj{v[0]}+{v[1]}" if v[0] is not None else f"0x{v[1]:x}"
    return v


def _describe(node) -> str:
    from ..minic.printer import expr_str

    return expr_str(node)
