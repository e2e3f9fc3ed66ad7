"""Reference interpreter: the brute-force oracle for the bounded checker.

It executes the original program (loops run natively, an iteration counter
standing in for the unwinding bound) under one concrete nondet assignment.
``enumerate_paths`` explores all assignments with an explicit worklist,
independently of the engine's restart-based search.

Values are Python ints for integer types and ``(object id | None, offset)``
tuples for pointers. ``(None, 0)`` is NULL; ``(None, k)`` with ``k != 0`` is
an integer address that points to no object.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..minic import ast as A
from ..minic.typecheck import arith_type, promote
from ..proof import ret_symbol
from .program import HARNESS_FILE, Program, holds
from .semantics import (
    FREE_KINDS, MEMCPY_KINDS, OVERFLOW_KIND, DomainConfig, alloc_sizes, bits, c_div, c_mod, domain_values, site,
)

NULL = (None, 0)
BAD_POINTER = (None, 1)


class Unassigned(Exception):
    def __init__(self, name, values):
        super().__init__(name)
        self.name = name
        self.values = values


class PathEnd(Exception):
    def __init__(self, kind):
        super().__init__(kind)
        self.kind = kind  # pruned | saturated | stopped


class Fault(Exception):
    """Execution cannot continue for reasons outside the program's semantics."""


class _Return(Exception):
    def __init__(self, value):
        super().__init__()
        self.value = value


@dataclass
class Obj:
    size: int
    cells: list
    dynamic: bool
    state: str = "live"  # live | freed | dead
    label: str = ""


class _Var:
    __slots__ = ("value", "obj", "ty", "array")

    def __init__(self, ty, value=None, obj=None, array=False):
        self.ty = ty
        self.value = value
        self.obj = obj
        self.array = array


@dataclass
class PathOutcome:
    assignment: dict
    end: str  # complete | pruned | saturated | stopped
    lines: set = field(default_factory=set)
    covered: set = field(default_factory=set)  # check keys
    violated: list = field(default_factory=list)  # check keys, in order
    saturated: set = field(default_factory=set)


def _encode(v: int, w: int) -> list:
    u = v % (1 << (8 * w))
    return [(u >> (8 * i)) & 0xFF for i in range(w)]


def _decode(cells: list, ty: A.Ty) -> int:
    u = sum((c or 0) << (8 * i) for i, c in enumerate(cells))
    return A.wrap(u, ty)


class RefRun:
    def __init__(self, prog: Program, cfg: DomainConfig, assignment: dict):
        self.p = prog
        self.cfg = cfg
        self.assign = assignment
        self.counts: dict = {}
        self.objs: list = []
        self.frames: list = []  # each frame: (fn, list of scope dicts, list of scope obj lists)
        self.globals: dict = {}
        self.syms: dict = {}
        self.out = PathOutcome(dict(assignment), "complete")

    # -- nondeterminism
    def choose(self, base: str, values) -> int:
        k = self.counts.get(base, 0)
        self.counts[base] = k + 1
        name = f"{base}#{k}"
        if name not in self.assign:
            raise Unassigned(name, tuple(values))
        return self.assign[name]

    # -- properties
    def check(self, file, node, kind, ok: bool) -> bool:
        key = (file, node.line, node.col, kind)
        self.out.covered.add(key)
        if not ok:
            self.out.violated.append(key)
        return ok

    def bind(self, sym, value):
        self.syms[sym] = value
        for t in self.p.terms_by_symbol.get(sym, ()):
            if all(s in self.syms for s in t.subjects) and not holds(t, self.syms):
                raise PathEnd("pruned")

    # -- helpers
    @property
    def fn(self):
        return self.frames[-1][0]

    @property
    def file(self):
        return self.fn.file

    def new_obj(self, size, dynamic, label="", init=None):
        cells = [init] * size
        self.objs.append(Obj(size, cells, dynamic, "live", label))
        return len(self.objs) - 1

    def lookup(self, name):
        for scope in reversed(self.frames[-1][1]):
            if name in scope:
                return scope[name]
        if name in self.globals:
            return self.globals[name]
        return None

    def read_obj(self, oid, off, ty, node):
        o = self.objs[oid]
        cells = o.cells[off:off + ty.width]
        if all(c is None for c in cells):
            v = self.choose(site("read", self.file, node.line, node.col), domain_values(ty, self.cfg))
            o.cells[off:off + ty.width] = _encode(v, ty.width)
            return v
        return _decode(cells, ty)

    def write_obj(self, oid, off, ty, v):
        self.objs[oid].cells[off:off + ty.width] = _encode(v, ty.width)

    def pointer_ok(self, node, p, w) -> None:
        f = self.file
        oid, off = p
        if not self.check(f, node, "null-deref", p != NULL):
            raise PathEnd("stopped")
        if not self.check(f, node, "invalid-deref", oid is not None):
            raise PathEnd("stopped")
        o = self.objs[oid]
        if not self.check(f, node, "deallocated-deref", o.state != "freed"):
            raise PathEnd("stopped")
        if not self.check(f, node, "dead-object-deref", o.state != "dead"):
            raise PathEnd("stopped")
        if not self.check(f, node, "oob-pointer-deref", 0 <= off and off + w <= o.size):
            raise PathEnd("stopped")

    @staticmethod
    def convert(v, ty):
        if ty.ptr:
            return v
        return A.wrap(v, ty)

    # -- entry
    def run(self) -> PathOutcome:
        try:
            self.frames.append((self.p.harness, [{}], [[]]))
            for g in self.p.globals:
                ty = g.ty
                if g.array_len is not None:
                    oid = self.new_obj(g.array_len * ty.width, False, g.name, 0)
                    self.globals[g.name] = _Var(ty, obj=oid, array=True)
                    continue
                oid = self.new_obj(ty.width, False, g.name, 0)
                if g.init is not None:
                    self.write_obj(oid, 0, ty, A.wrap(self.eval(g.init), ty))
                self.globals[g.name] = _Var(ty, obj=oid)
            self.frames.pop()
            self.call_user(self.p.harness, [])
        except PathEnd as e:
            self.out.end = e.kind
        return self.out

    # -- statements
    def mark(self, line):
        self.out.lines.add((self.file, line))

    def exec_block(self, b: A.Block, top=False):
        frame = self.frames[-1]
        frame[1].append({})
        frame[2].append([])
        try:
            for s in b.stmts:
                self.exec(s)
                if top and isinstance(s, A.VarDecl) and s.init is not None:
                    self.bind(s.name, self.lookup(s.name).value)
        finally:
            frame[1].pop()
            for oid in frame[2].pop():
                self.objs[oid].state = "dead"

    def declare(self, s: A.VarDecl):
        frame = self.frames[-1]
        fname = frame[0].name
        if s.array_len is not None:
            oid = self.new_obj(s.array_len * s.ty.width, False, s.name)
            frame[2][-1].append(oid)
            frame[1][-1][s.name] = _Var(s.ty, obj=oid, array=True)
            return
        val = None
        if s.init is not None:
            val = self.convert(self.eval(s.init), s.ty)
        if s.name in self.p.addr_taken.get(fname, ()) and not s.ty.ptr:
            oid = self.new_obj(s.ty.width, False, s.name)
            frame[2][-1].append(oid)
            if val is not None:
                self.write_obj(oid, 0, s.ty, val)
            frame[1][-1][s.name] = _Var(s.ty, obj=oid)
        else:
            if val is None and s.ty.ptr:
                val = BAD_POINTER
            frame[1][-1][s.name] = _Var(s.ty, value=val)

    def exec(self, s):
        if isinstance(s, A.Block):
            self.exec_block(s)
        elif isinstance(s, A.VarDecl):
            self.mark(s.line)
            self.declare(s)
        elif isinstance(s, A.ExprStmt):
            self.mark(s.line)
            self.eval(s.expr)
        elif isinstance(s, A.If):
            self.mark(s.line)
            if self.truthy(self.eval(s.cond)):
                self.exec(s.then)
            elif s.else_ is not None:
                self.exec(s.else_)
        elif isinstance(s, A.While):
            self.loop(s, s.cond, s.body, None)
        elif isinstance(s, A.For):
            frame = self.frames[-1]
            frame[1].append({})
            frame[2].append([])
            try:
                if s.init is not None:
                    self.exec(s.init)
                self.loop(s, s.cond, s.body, s.step)
            finally:
                frame[1].pop()
                for oid in frame[2].pop():
                    self.objs[oid].state = "dead"
        elif isinstance(s, A.Return):
            self.mark(s.line)
            v = None
            if s.value is not None:
                v = self.convert(self.eval(s.value), self.fn.return_type)
            raise _Return(v)
        elif isinstance(s, A.Assume):
            self.mark(s.line)
            if not self.truthy(self.eval(s.cond)):
                raise PathEnd("pruned")
        elif isinstance(s, A.Assert):
            self.mark(s.line)
            self.check(self.file, s, "assertion", self.truthy(self.eval(s.cond)))
        elif isinstance(s, A.Empty):
            pass
        else:
            raise Fault(f"unsupported statement {type(s).__name__}")

    def loop(self, s, cond, body, step):
        bound = self.p.bound(s.loop_id)
        n = 0
        while True:
            self.mark(s.line)
            if cond is not None and not self.truthy(self.eval(cond)):
                return
            if n == bound:
                self.out.saturated.add(s.loop_id)
                raise PathEnd("saturated")
            self.exec(body)
            if step is not None:
                self.eval(step)
            n += 1

    @staticmethod
    def truthy(v) -> bool:
        if isinstance(v, tuple):
            return v != NULL
        return v != 0

    # -- lvalues: ("var", _Var) or ("mem", oid, off)
    def lvalue(self, e):
        if isinstance(e, A.Name):
            var = self.lookup(e.id)
            if var.obj is not None:
                return ("mem", var.obj, 0)
            return ("var", var)
        if isinstance(e, A.Index):
            p = self.eval(e.base)
            i = self.eval(e.index)
            w = e.ty.width
            if e.array_len is not None:
                f = self.file
                if not self.check(f, e, "array-lower-bound", i >= 0):
                    raise PathEnd("stopped")
                if not self.check(f, e, "array-upper-bound", i < e.array_len):
                    raise PathEnd("stopped")
                return ("mem", p[0], p[1] + i * w)
            q = (p[0], p[1] + i * w)
            self.pointer_ok(e, q, w)
            return ("mem", q[0], q[1])
        if isinstance(e, A.Deref):
            p = self.eval(e.ptr)
            self.pointer_ok(e, p, e.ty.width)
            return ("mem", p[0], p[1])
        raise Fault("not an lvalue")

    def load(self, lv, ty, node):
        if lv[0] == "var":
            var = lv[1]
            if var.value is None:
                var.value = self.choose(site("read", self.file, node.line, node.col),
                                        domain_values(ty, self.cfg))
            return var.value
        return self.read_obj(lv[1], lv[2], ty, node)

    def store(self, lv, ty, v):
        v = self.convert(v, ty)
        if lv[0] == "var":
            lv[1].value = v
        else:
            self.write_obj(lv[1], lv[2], ty, v)
        return v

    # -- expressions
    def eval(self, e):
        if isinstance(e, A.IntLit):
            return e.value
        if isinstance(e, A.NullLit):
            return NULL
        if isinstance(e, A.Name):
            var = self.lookup(e.id)
            if var is None:
                return self.p.configs[e.id]
            if var.array:
                return (var.obj, 0)
            return self.load(self.lvalue(e), var.ty, e)
        if isinstance(e, A.Unary):
            v = self.eval(e.operand)
            if e.op == "!":
                return 0 if self.truthy(v) else 1
            t = promote(e.operand.ty)
            v = A.wrap(v, t)
            if e.op == "~":
                return A.wrap(~v, t)
            r = -v
            if t.is_signed:
                self.check(self.file, e, "signed-overflow-sub", A.in_range(r, t))
            return A.wrap(r, t)
        if isinstance(e, A.Binary):
            return self.binary(e)
        if isinstance(e, A.Assign):
            return self.assignment_expr(e)
        if isinstance(e, A.IncDec):
            lv = self.lvalue(e.target)
            t = e.target.ty
            old = self.load(lv, t, e.target)
            if t.ptr:
                step = A.WIDTH[t.base]
                new = (old[0], old[1] + (step if e.op == "++" else -step))
            else:
                ct = promote(t)
                r = A.wrap(old, ct) + (1 if e.op == "++" else -1)
                if ct.is_signed:
                    kind = "signed-overflow-add" if e.op == "++" else "signed-overflow-sub"
                    self.check(self.file, e, kind, A.in_range(r, ct))
                new = A.wrap(r, ct)
            new = self.store(lv, t, new)
            return new if e.prefix else old
        if isinstance(e, (A.Index, A.Deref)):
            lv = self.lvalue(e)
            return self.read_obj(lv[1], lv[2], e.ty, e)
        if isinstance(e, A.AddrOf):
            lv = self.lvalue(e.target)
            if lv[0] == "var":
                raise Fault("address of register variable")
            return (lv[1], lv[2])
        if isinstance(e, A.Cast):
            v = self.eval(e.expr)
            if e.to.ptr:
                if isinstance(v, tuple):
                    return v
                return NULL if v == 0 else (None, v)
            return A.wrap(v, e.to)
        if isinstance(e, A.Call):
            return self.call(e)
        raise Fault(f"unsupported expression {type(e).__name__}")

    def arith(self, node, op, a, b, t):
        """Integer arithmetic in type ``t`` with the checks attached to ``node``."""
        f = self.file
        if op in ("<<", ">>"):
            ok_neg = self.check(f, node, "shift-distance-negative", b >= 0)
            ok_big = self.check(f, node, "shift-distance-too-large", b < bits(t))
            if not (ok_neg and ok_big):
                return 0
            return A.wrap(a << b, t) if op == "<<" else A.wrap(a >> b, t)
        a, b = A.wrap(a, t), A.wrap(b, t)
        if op in ("/", "%"):
            if not self.check(f, node, "div-by-zero", b != 0):
                raise PathEnd("stopped")
            return A.wrap(c_div(a, b) if op == "/" else c_mod(a, b), t)
        if op in OVERFLOW_KIND:
            r = a + b if op == "+" else a - b if op == "-" else a * b
            if t.is_signed:
                self.check(f, node, OVERFLOW_KIND[op], A.in_range(r, t))
            return A.wrap(r, t)
        r = {"&": a & b, "|": a | b, "^": a ^ b}[op]
        return A.wrap(r, t)

    def binary(self, e):
        op = e.op
        if op == "&&":
            return 1 if self.truthy(self.eval(e.left)) and self.truthy(self.eval(e.right)) else 0
        if op == "||":
            return 1 if self.truthy(self.eval(e.left)) or self.truthy(self.eval(e.right)) else 0
        a = self.eval(e.left)
        b = self.eval(e.right)
        lt, rt = e.left.ty, e.right.ty
        if op in ("==", "!=", "<", "<=", ">", ">="):
            if isinstance(a, tuple) or isinstance(b, tuple):
                ka = (-1 if a[0] is None else a[0], a[1])
                kb = (-1 if b[0] is None else b[0], b[1])
            else:
                t = arith_type(lt, rt)
                ka, kb = A.wrap(a, t), A.wrap(b, t)
            r = {"==": ka == kb, "!=": ka != kb, "<": ka < kb,
                 "<=": ka <= kb, ">": ka > kb, ">=": ka >= kb}[op]
            return 1 if r else 0
        if lt.ptr or rt.ptr:
            p, n, pt = (a, b, lt) if lt.ptr else (b, a, rt)
            d = n * A.WIDTH[pt.base]
            return (p[0], p[1] + (d if op == "+" else -d))
        if op in ("<<", ">>"):
            t = promote(lt)
            return self.arith(e, op, A.wrap(a, t), A.wrap(b, promote(rt)), t)
        return self.arith(e, op, a, b, arith_type(lt, rt))

    def assignment_expr(self, e):
        v = self.eval(e.value)
        lv = self.lvalue(e.target)
        t = e.target.ty
        if e.op == "=":
            return self.store(lv, t, v)
        op = e.op[:-1]
        old = self.load(lv, t, e.target)
        if t.ptr:
            d = v * A.WIDTH[t.base]
            new = (old[0], old[1] + (d if op == "+" else -d))
        elif op in ("<<", ">>"):
            ct = promote(t)
            new = self.arith(e, op, A.wrap(old, ct), A.wrap(v, promote(e.value.ty)), ct)
        else:
            new = self.arith(e, op, old, v, arith_type(t, e.value.ty))
        return self.store(lv, t, new)

    # -- calls
    def call(self, e: A.Call):
        args = [self.eval(a) for a in e.args]
        name = e.name
        f = self.file
        if name.startswith("nondet_"):
            ty = e.ty
            return self.choose(site("nondet", f, e.line, e.col), domain_values(ty, self.cfg))
        if name == "malloc":
            n = A.wrap(args[0], A.SIZE_T)
            if n > 1 << 20:
                raise Fault(f"allocation of {n} bytes exceeds the interpreter limit")
            return (self.new_obj(n, True, "malloc"), 0)
        if name == "free":
            p = args[0]
            if p == NULL:
                for k in FREE_KINDS:
                    self.check(f, e, k, True)
                return None
            o = self.objs[p[0]] if p[0] is not None else None
            if not self.check(f, e, "double-free", o is None or o.state != "freed"):
                raise PathEnd("stopped")
            if not self.check(f, e, "free-dynamic", o is not None and o.dynamic):
                raise PathEnd("stopped")
            if not self.check(f, e, "free-offset-zero", p[1] == 0):
                raise PathEnd("stopped")
            o.state = "freed"
            return None
        if name == "memcpy":
            d, s, n = args[0], args[1], A.wrap(args[2], A.SIZE_T)
            if not self.check(f, e, MEMCPY_KINDS[0], self.range_ok(s, n)):
                raise PathEnd("stopped")
            if not self.check(f, e, MEMCPY_KINDS[1], self.range_ok(d, n)):
                raise PathEnd("stopped")
            disjoint = d[0] != s[0] or n == 0 or d[1] + n <= s[1] or s[1] + n <= d[1]
            if not self.check(f, e, MEMCPY_KINDS[2], disjoint):
                raise PathEnd("stopped")
            data = self.objs[s[0]].cells[s[1]:s[1] + n]
            self.objs[d[0]].cells[d[1]:d[1] + n] = data
            return None
        if name == "memset":
            d, c, n = args[0], args[1], A.wrap(args[2], A.SIZE_T)
            if not self.check(f, e, "memset-dst-writeable", self.range_ok(d, n)):
                raise PathEnd("stopped")
            self.objs[d[0]].cells[d[1]:d[1] + n] = [c % 256] * n
            return None
        if name in self.p.functions:
            fn = self.p.functions[name]
            return self.call_user(fn, args)
        if name in self.p.models:
            return self.call_model(name, args)
        raise Fault(f"call to {name!r}, which is neither in scope nor modeled")

    def range_ok(self, p, n) -> bool:
        if p[0] is None:
            return False
        o = self.objs[p[0]]
        return o.state == "live" and 0 <= p[1] and p[1] + n <= o.size

    def call_user(self, fn, args):
        depth = sum(1 for fr in self.frames if fr[0] is fn)
        if depth >= self.cfg.recursion_cap:
            raise Fault(f"recursion deeper than {self.cfg.recursion_cap} in {fn.name}")
        scope = {}
        objs = []
        for prm, v in zip(fn.params, args):
            v = self.convert(v, prm.ty)
            if prm.name in self.p.addr_taken.get(fn.name, ()) and not prm.ty.ptr:
                oid = self.new_obj(prm.ty.width, False, prm.name)
                self.write_obj(oid, 0, prm.ty, v)
                objs.append(oid)
                scope[prm.name] = _Var(prm.ty, obj=oid)
            else:
                scope[prm.name] = _Var(prm.ty, value=v)
        frame = (fn, [scope], [objs])
        self.frames.append(frame)
        result = None
        try:
            self.exec_block(fn.body, top=fn is self.p.harness)
            if fn.return_type != A.VOID:
                result = 0
        except _Return as r:
            result = r.value
        finally:
            for lst in frame[2]:
                for oid in lst:
                    self.objs[oid].state = "dead"
            self.frames.pop()
        return result

    def call_model(self, name, args):
        m = self.p.models[name]
        sig = self.p.model_sigs[name]
        pidx = {prm.name: i for i, prm in enumerate(sig.params)}
        for h in m.side_effects:
            p = args[pidx[h]]
            if isinstance(p, tuple) and p[0] is not None:
                o = self.objs[p[0]]
                if o.state == "live" and 0 <= p[1] <= o.size:
                    o.cells[p[1]:] = [None] * (o.size - p[1])
        spec = m.return_spec
        if spec.kind == "none":
            return None
        if spec.kind == "nondet":
            v = self.choose(f"model:{name}", domain_values(spec.ty, self.cfg))
        elif spec.kind == "alloc":
            n = self.choose(f"model:{name}.size", alloc_sizes(self.cfg))
            v = (self.new_obj(n, True, name), 0)
        else:
            v = (self.new_obj(spec.size, True, name), 0)
        self.bind(ret_symbol(name), v)
        return v


@dataclass
class RefResult:
    paths: list  # PathOutcome
    error: str = ""

    @property
    def violated(self) -> dict:
        out = {}
        for p in self.paths:
            for k in p.violated:
                out.setdefault(k, p.assignment)
        return out

    @property
    def covered(self) -> set:
        return set().union(*[p.covered for p in self.paths]) if self.paths else set()

    @property
    def lines(self) -> set:
        return set().union(*[p.lines for p in self.paths]) if self.paths else set()

    @property
    def saturated(self) -> set:
        return set().union(*[p.saturated for p in self.paths]) if self.paths else set()


def run_assignment(prog: Program, cfg: DomainConfig, assignment: dict) -> PathOutcome:
    """Concretely execute one complete assignment (raises Unassigned if it is partial)."""
    return RefRun(prog, cfg, assignment).run()


def enumerate_paths(prog: Program, cfg: DomainConfig, max_paths: int = 10**6) -> RefResult:
    work = [{}]
    paths = []
    while work:
        a = work.pop()
        try:
            paths.append(RefRun(prog, cfg, a).run())
        except Unassigned as u:
            for v in reversed(u.values):
                b = dict(a)
                b[u.name] = v
                work.append(b)
        except (Fault, RecursionError) as exc:
            return RefResult(paths, str(exc))
        if len(paths) > max_paths:
            return RefResult(paths, "path limit")
    return RefResult(paths)


__all__ = ["RefRun", "RefResult", "PathOutcome", "enumerate_paths", "run_assignment",
           "Unassigned", "Fault", "NULL", "HARNESS_FILE"]
